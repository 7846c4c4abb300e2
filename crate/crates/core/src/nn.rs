//! Fully connected layers and small multilayer perceptrons.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{init_scale, Activation, Matrix, Rng, Vector};
use crate::params::{
    visit_matrix, visit_matrix_mut, visit_vector, visit_vector_mut, ParamSet, ParamView,
};

/// `y = W x + b`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Matrix,
    pub b: Vector,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Dense {
            w: Matrix::zeros(output, input),
            b: Vector::zeros(output),
        }
    }

    pub fn init(input: usize, output: usize, rng: &mut Rng) -> Self {
        let s = init_scale(input);
        Dense {
            w: rng.uniform_matrix(output, input, s),
            b: rng.uniform_vector(output, s),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Vector {
        self.w.apply(x).add(&self.b)
    }
}

impl ParamSet for Dense {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        visit_matrix(prefix, "w", &self.w, f);
        visit_vector(prefix, "b", &self.b, f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        visit_matrix_mut(prefix, "w", &mut self.w, f);
        visit_vector_mut(prefix, "b", &mut self.b, f);
    }
}

/// Multilayer perceptron: `hidden` activation between layers, `output`
/// activation after the last one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub hidden: Activation,
    pub output: Activation,
}

/// Values recorded by [`Mlp::forward_cached`] for the backward pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    inputs: Vec<Vector>,
    pre: Vec<Vector>,
}

impl Mlp {
    /// `sizes = [in, hidden.., out]`.
    pub fn init(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut Rng) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| Dense::init(w[0], w[1], rng))
            .collect();
        Mlp {
            layers,
            hidden,
            output,
        }
    }

    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Self {
        let layers = sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Mlp {
            layers,
            hidden,
            output,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(Dense::output_dim));
        s
    }

    fn activation_for(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            self.hidden
        }
    }

    pub fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(
                "mlp input",
                format!("vector[{}]", x.len()),
                format!("expected [{}]", self.input_dim()),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Vector {
        let mut a = Vector::from(x);
        for (i, layer) in self.layers.iter().enumerate() {
            let act = self.activation_for(i);
            a = act.apply(&layer.forward(&a));
        }
        a
    }

    pub fn forward_cached(&self, x: &[f64]) -> (Vector, MlpCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = Vector::from(x);
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&a);
            let next = self.activation_for(i).apply(&z);
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        (a, MlpCache { inputs, pre })
    }

    /// Accumulates parameter gradients into `grad` and returns the input cotangent.
    pub fn backward(&self, cache: &MlpCache, dy: &[f64], grad: &mut Mlp) -> Vector {
        let mut d = Vector::from(dy);
        for i in (0..self.layers.len()).rev() {
            let act = self.activation_for(i);
            let dz = match act {
                Activation::Identity => d,
                _ => d.hadamard(&act.apply_deriv(&cache.pre[i])),
            };
            grad.layers[i].w.add_outer(1.0, &dz, &cache.inputs[i]);
            grad.layers[i].b.add_assign(&dz);
            d = self.layers[i].w.apply_transpose(&dz);
        }
        d
    }
}

impl ParamSet for Mlp {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        for (i, layer) in self.layers.iter().enumerate() {
            layer.visit(&crate::params::join(prefix, &format!("l{i}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_mut(&crate::params::join(prefix, &format!("l{i}")), f);
        }
    }
}
