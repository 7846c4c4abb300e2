//! Continuous-time recurrent encoders.
//!
//! Between observations the hidden state `h` follows the neural vector
//! field; at each observation the discrete cell is applied to the evolved
//! state. The LSTM memory `C` is carried between cells untouched by the
//! solver.

use serde::{Deserialize, Serialize};

use super::{Cell, CellState, LstmCell, RnnCell, TimedSequence};
use crate::error::{Error, Result};
use crate::nn::MlpCache;
use crate::numcore::Vector;
use crate::odesolve::{solve_with_tape, FixedSpan, NeuralField, SolveTape, VectorField};
use crate::params::{join, ParamSet, ParamView};

/// A recurrent cell whose hidden state evolves under an ODE between observations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeRecurrent<C> {
    pub cell: C,
    pub field: NeuralField,
    /// Fixed RK steps per inter-observation gap.
    pub steps_per_gap: usize,
}

pub type OdeRnn = OdeRecurrent<RnnCell>;
pub type OdeLstm = OdeRecurrent<LstmCell>;

#[derive(Clone, Debug)]
pub struct EncodeOutput {
    /// Hidden state after each observation, in processing order.
    pub outputs: Vec<Vector>,
    /// Observation times in processing order.
    pub times: Vec<f64>,
    pub final_state: CellState,
}

impl EncodeOutput {
    pub fn last_hidden(&self) -> &Vector {
        &self.final_state.h
    }
}

struct EncoderStep<K> {
    solve: SolveTape<MlpCache>,
    cell: K,
}

/// Recorded forward pass of an [`OdeRecurrent`] encoder.
pub struct EncoderTape<C: Cell> {
    steps: Vec<EncoderStep<C::Cache>>,
}

impl<C: Cell> EncoderTape<C> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn cell_cache(&self, step: usize) -> &C::Cache {
        &self.steps[step].cell
    }
}

/// Cotangents produced by [`OdeRecurrent::backward`].
#[derive(Clone, Debug)]
pub struct EncoderBackward {
    /// `dL/d(state)` before the first observation.
    pub d_init: CellState,
    /// `state_cotangents[k]` is `dL/d(state after k observations)`; index 0 is the initial state.
    pub state_cotangents: Vec<CellState>,
}

impl<C: Cell> OdeRecurrent<C> {
    pub fn new(cell: C, field: NeuralField, steps_per_gap: usize) -> Self {
        OdeRecurrent {
            cell,
            field,
            steps_per_gap,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.cell.hidden_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.cell.input_dim()
    }

    fn check(&self, seq: &TimedSequence) -> Result<()> {
        if seq.is_empty() {
            return Err(Error::invalid("cannot encode an empty sequence"));
        }
        if seq.dim() != self.input_dim() {
            return Err(Error::shape(
                "encoder input",
                format!("sequence dim {}", seq.dim()),
                format!("cell input dim {}", self.input_dim()),
            ));
        }
        if self.field.dim() != self.hidden_dim() {
            return Err(Error::shape(
                "encoder field",
                format!("field dim {}", self.field.dim()),
                format!("hidden dim {}", self.hidden_dim()),
            ));
        }
        Ok(())
    }

    /// Encodes from the zero state. With `reverse` set the observations are
    /// consumed from last to first, integrating backwards in time.
    pub fn encode(&self, seq: &TimedSequence, reverse: bool) -> Result<EncodeOutput> {
        Ok(self.encode_taped(seq, reverse)?.0)
    }

    pub fn encode_taped(
        &self,
        seq: &TimedSequence,
        reverse: bool,
    ) -> Result<(EncodeOutput, EncoderTape<C>)> {
        let n = self.hidden_dim();
        self.encode_from(&CellState::zeros(n), seq, reverse)
    }

    pub fn encode_from(
        &self,
        init: &CellState,
        seq: &TimedSequence,
        reverse: bool,
    ) -> Result<(EncodeOutput, EncoderTape<C>)> {
        self.check(seq)?;
        init.h.check_len("encoder initial h", self.hidden_dim())?;
        init.c.check_len("encoder initial c", self.hidden_dim())?;
        let order: Vec<usize> = if reverse {
            (0..seq.len()).rev().collect()
        } else {
            (0..seq.len()).collect()
        };
        let mut state = init.clone();
        let mut t_prev = seq.times()[order[0]];
        let mut outputs = Vec::with_capacity(order.len());
        let mut times = Vec::with_capacity(order.len());
        let mut steps = Vec::with_capacity(order.len());
        for (k, &idx) in order.iter().enumerate() {
            let t = seq.times()[idx];
            let span = FixedSpan::new(t_prev, t, self.steps_per_gap);
            let (trace, solve) =
                solve_with_tape(&self.field, &state.h, &span).map_err(|e| match e {
                    Error::Divergence { t, .. } => Error::Divergence { step: k, t },
                    other => other,
                })?;
            let (next, cache) = self
                .cell
                .step(&state.c, trace.final_state(), &seq.values()[idx]);
            if !next.h.is_finite() || !next.c.is_finite() {
                return Err(Error::Divergence { step: k, t });
            }
            outputs.push(next.h.clone());
            times.push(t);
            steps.push(EncoderStep { solve, cell: cache });
            state = next;
            t_prev = t;
        }
        Ok((
            EncodeOutput {
                outputs,
                times,
                final_state: state,
            },
            EncoderTape { steps },
        ))
    }

    /// Reverse pass. `d_outputs` holds cotangents on each output in
    /// processing order (or is empty); `d_final` is the cotangent on the
    /// final state. Parameter gradients are accumulated into `grad`.
    pub fn backward(
        &self,
        tape: &EncoderTape<C>,
        d_outputs: &[Vector],
        d_final: &CellState,
        grad: &mut Self,
    ) -> Result<EncoderBackward> {
        let n = self.hidden_dim();
        if !d_outputs.is_empty() && d_outputs.len() != tape.len() {
            return Err(Error::shape(
                "encoder backward",
                format!("{} output cotangents", d_outputs.len()),
                format!("{} steps", tape.len()),
            ));
        }
        d_final.h.check_len("encoder backward dh", n)?;
        d_final.c.check_len("encoder backward dc", n)?;
        if let Some(bad) = d_outputs.iter().find(|d| d.len() != n) {
            return Err(Error::shape(
                "encoder backward",
                format!("output cotangent [{}]", bad.len()),
                format!("hidden dim {n}"),
            ));
        }

        let mut cots = vec![CellState::zeros(n); tape.len() + 1];
        let mut dh = d_final.h.clone();
        let mut dc = d_final.c.clone();
        for k in (0..tape.len()).rev() {
            if !d_outputs.is_empty() {
                dh.add_assign(&d_outputs[k]);
            }
            cots[k + 1] = CellState {
                h: dh.clone(),
                c: dc.clone(),
            };
            let step = &tape.steps[k];
            let (dh_evolved, dc_prev) =
                self.cell
                    .step_backward(&step.cell, &dh, &dc, &mut grad.cell);
            dh = step
                .solve
                .backward(&self.field, &dh_evolved, &mut grad.field);
            dc = dc_prev;
        }
        let d_init = CellState { h: dh, c: dc };
        cots[0] = d_init.clone();
        Ok(EncoderBackward {
            d_init,
            state_cotangents: cots,
        })
    }
}

impl<C: Cell> ParamSet for OdeRecurrent<C> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        self.cell.visit(&join(prefix, "cell"), f);
        self.field.visit(&join(prefix, "field"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.cell.visit_mut(&join(prefix, "cell"), f);
        self.field.visit_mut(&join(prefix, "field"), f);
    }
}
