//! Recurrent cells and the ODE-RNN / ODE-LSTM encoders built on them.

mod encoder;
mod lstm;
mod rnn;
mod sequence;

pub use encoder::{EncodeOutput, EncoderBackward, EncoderTape, OdeLstm, OdeRecurrent, OdeRnn};
pub use lstm::{LstmCache, LstmCell};
pub use rnn::{RnnCache, RnnCell};
pub use sequence::TimedSequence;

use serde::{Deserialize, Serialize};

use crate::numcore::Vector;
use crate::params::ParamSet;

/// Hidden state `h` and memory `C` (all zeros for plain RNN cells).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    pub h: Vector,
    pub c: Vector,
}

impl CellState {
    pub fn zeros(n: usize) -> Self {
        CellState {
            h: Vector::zeros(n),
            c: Vector::zeros(n),
        }
    }
}

/// Discrete recurrent update with a recorded reverse pass.
pub trait Cell: ParamSet + Clone {
    type Cache;

    fn hidden_dim(&self) -> usize;
    fn input_dim(&self) -> usize;

    /// Applies the cell to `(C_{i-1}, h, x_i)`, where `h` is the (possibly
    /// ODE-evolved) hidden state fed to the gates.
    fn step(&self, c_prev: &Vector, h_in: &Vector, x: &Vector) -> (CellState, Self::Cache);

    /// Given cotangents on the new `(h, C)`, accumulates parameter gradients
    /// and returns cotangents on `(h_in, C_{i-1})`.
    fn step_backward(
        &self,
        cache: &Self::Cache,
        dh: &Vector,
        dc: &Vector,
        grad: &mut Self,
    ) -> (Vector, Vector);
}
