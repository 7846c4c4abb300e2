use serde::{Deserialize, Serialize};

use crate::nn::{Mlp, MlpCache};
use crate::numcore::{Activation, Rng, Vector};
use crate::params::{ParamSet, ParamView};

/// Right-hand side `dh/dt = f(h, t)` of an ODE.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, h: &[f64]) -> Vector;
}

/// A vector field that can record its evaluation and pull cotangents back
/// through it.
pub trait DiffField: VectorField {
    type Cache;
    /// Parameter-shaped gradient accumulator.
    type Grad;

    fn eval_taped(&self, t: f64, h: &[f64]) -> (Vector, Self::Cache);

    /// Given `cot = dL/df`, accumulates `dL/dtheta` into `grad` and returns `dL/dh`.
    fn vjp(&self, cache: &Self::Cache, cot: &[f64], grad: &mut Self::Grad) -> Vector;
}

/// Wraps a closure as a (non-differentiable) vector field.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64, &[f64]) -> Vector> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnField { dim, f }
    }
}

impl<F: Fn(f64, &[f64]) -> Vector> VectorField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, h: &[f64]) -> Vector {
        (self.f)(t, h)
    }
}

/// Neural vector field: an MLP with tanh hidden layers and a linear output
/// mapping the state (optionally with `t` appended) to its time derivative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuralField {
    pub net: Mlp,
    pub time_input: bool,
}

impl NeuralField {
    pub fn init(dim: usize, hidden: &[usize], time_input: bool, rng: &mut Rng) -> Self {
        NeuralField {
            net: Mlp::init(
                &Self::sizes(dim, hidden, time_input),
                Activation::Tanh,
                Activation::Identity,
                rng,
            ),
            time_input,
        }
    }

    /// The identically zero field; its output is exactly `0` for every input.
    pub fn zeros(dim: usize, hidden: &[usize], time_input: bool) -> Self {
        NeuralField {
            net: Mlp::zeros(
                &Self::sizes(dim, hidden, time_input),
                Activation::Tanh,
                Activation::Identity,
            ),
            time_input,
        }
    }

    fn sizes(dim: usize, hidden: &[usize], time_input: bool) -> Vec<usize> {
        let mut sizes = vec![dim + usize::from(time_input)];
        sizes.extend_from_slice(hidden);
        sizes.push(dim);
        sizes
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        let s = self.net.sizes();
        s[1..s.len() - 1].to_vec()
    }

    fn input(&self, t: f64, h: &[f64]) -> Vector {
        if self.time_input {
            Vector::from(h).concat(&[t])
        } else {
            Vector::from(h)
        }
    }
}

impl VectorField for NeuralField {
    fn dim(&self) -> usize {
        self.net.output_dim()
    }

    fn eval(&self, t: f64, h: &[f64]) -> Vector {
        self.net.forward(&self.input(t, h))
    }
}

impl DiffField for NeuralField {
    type Cache = MlpCache;
    type Grad = NeuralField;

    fn eval_taped(&self, t: f64, h: &[f64]) -> (Vector, MlpCache) {
        self.net.forward_cached(&self.input(t, h))
    }

    fn vjp(&self, cache: &MlpCache, cot: &[f64], grad: &mut NeuralField) -> Vector {
        let mut dx = self.net.backward(cache, cot, &mut grad.net);
        if self.time_input {
            let n = dx.len() - 1;
            dx = Vector::from(&dx[..n]);
        }
        dx
    }
}

impl ParamSet for NeuralField {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        self.net.visit(prefix, f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.net.visit_mut(prefix, f);
    }
}
