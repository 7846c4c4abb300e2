use serde::{Deserialize, Serialize};

use super::{Cell, CellState};
use crate::error::Result;
use crate::numcore::{init_scale, Activation, Matrix, Rng, Vector};
use crate::params::{
    visit_matrix, visit_matrix_mut, visit_vector, visit_vector_mut, ParamSet, ParamView,
};

/// Elman cell `h_i = act(W_feedback h_{i-1} + W_input x_i + b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnnCell {
    pub w_input: Matrix,
    pub w_feedback: Matrix,
    pub b: Vector,
    pub activation: Activation,
}

#[derive(Clone, Debug)]
pub struct RnnCache {
    x: Vector,
    h_in: Vector,
    pre: Vector,
}

impl RnnCell {
    pub fn zeros(input_dim: usize, hidden: usize, activation: Activation) -> Self {
        RnnCell {
            w_input: Matrix::zeros(hidden, input_dim),
            w_feedback: Matrix::zeros(hidden, hidden),
            b: Vector::zeros(hidden),
            activation,
        }
    }

    pub fn init(input_dim: usize, hidden: usize, activation: Activation, rng: &mut Rng) -> Self {
        let s = init_scale(input_dim + hidden);
        RnnCell {
            w_input: rng.uniform_matrix(hidden, input_dim, s),
            w_feedback: rng.uniform_matrix(hidden, hidden, s),
            b: rng.uniform_vector(hidden, s),
            activation,
        }
    }

    fn pre_activation(&self, h_prev: &[f64], x: &[f64]) -> Vector {
        let mut z = self.w_feedback.apply(h_prev);
        z.add_assign(&self.w_input.apply(x));
        z.add_assign(&self.b);
        z
    }

    /// One update, with shape checks.
    pub fn forward(&self, h_prev: &Vector, x: &Vector) -> Result<Vector> {
        h_prev.check_len("rnn_cell h_prev", self.hidden_dim())?;
        x.check_len("rnn_cell x", self.input_dim())?;
        Ok(self.activation.apply(&self.pre_activation(h_prev, x)))
    }

    /// `dh_i/dh_{i-1} = diag(act'(pre)) W_feedback` for a recorded step.
    pub fn step_jacobian(&self, cache: &RnnCache) -> Matrix {
        let d = self.activation.apply_deriv(&cache.pre);
        let mut j = self.w_feedback.clone();
        for i in 0..j.rows() {
            for k in 0..j.cols() {
                j[(i, k)] *= d[i];
            }
        }
        j
    }
}

impl Cell for RnnCell {
    type Cache = RnnCache;

    fn hidden_dim(&self) -> usize {
        self.w_feedback.rows()
    }

    fn input_dim(&self) -> usize {
        self.w_input.cols()
    }

    fn step(&self, c_prev: &Vector, h_in: &Vector, x: &Vector) -> (CellState, RnnCache) {
        let pre = self.pre_activation(h_in, x);
        let h = self.activation.apply(&pre);
        let state = CellState {
            h,
            c: Vector::zeros(c_prev.len()),
        };
        (
            state,
            RnnCache {
                x: x.clone(),
                h_in: h_in.clone(),
                pre,
            },
        )
    }

    fn step_backward(
        &self,
        cache: &RnnCache,
        dh: &Vector,
        _dc: &Vector,
        grad: &mut Self,
    ) -> (Vector, Vector) {
        let dz = dh.hadamard(&self.activation.apply_deriv(&cache.pre));
        grad.w_feedback.add_outer(1.0, &dz, &cache.h_in);
        grad.w_input.add_outer(1.0, &dz, &cache.x);
        grad.b.add_assign(&dz);
        (
            self.w_feedback.apply_transpose(&dz),
            Vector::zeros(dh.len()),
        )
    }
}

impl ParamSet for RnnCell {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        visit_matrix(prefix, "w_input", &self.w_input, f);
        visit_matrix(prefix, "w_feedback", &self.w_feedback, f);
        visit_vector(prefix, "b", &self.b, f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        visit_matrix_mut(prefix, "w_input", &mut self.w_input, f);
        visit_matrix_mut(prefix, "w_feedback", &mut self.w_feedback, f);
        visit_vector_mut(prefix, "b", &mut self.b, f);
    }
}
