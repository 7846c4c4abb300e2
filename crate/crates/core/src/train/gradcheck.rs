use std::fmt;

use serde::{Deserialize, Serialize};

use super::{loss, LossSpec};
use crate::cells::{Cell, CellState, LstmCell, OdeRecurrent, RnnCell, TimedSequence};
use crate::error::{Error, Result};
use crate::latent::{LatentOdeModel, ModelConfig, ModelVariant};
use crate::numcore::{Activation, Rng, Vector};
use crate::odesolve::NeuralField;
use crate::params::ParamSet;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Magnitude below which errors are measured in absolute rather than
/// relative terms, so that parameters with (near) zero gradient do not
/// report meaningless ratios.
pub const REL_FLOOR: f64 = 1e-3;

/// `|a − n| / max(|a|, |n|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockCheck {
    pub name: String,
    pub len: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Index within the block of the worst relative error.
    pub worst_index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub label: String,
    pub tolerance: f64,
    pub blocks: Vec<BlockCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.blocks
            .iter()
            .all(|b| b.max_rel_error <= self.tolerance)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn failures(&self) -> impl Iterator<Item = &BlockCheck> {
        self.blocks
            .iter()
            .filter(move |b| b.max_rel_error > self.tolerance)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.blocks {
            let status = if b.max_rel_error <= self.tolerance {
                "ok"
            } else {
                "FAIL"
            };
            writeln!(
                f,
                "{:<28} {:<28} {:>6} rel {:.3e} abs {:.3e} {status}",
                self.label, b.name, b.len, b.max_rel_error, b.max_abs_error
            )?;
        }
        Ok(())
    }
}

/// Compares the flattened `analytic` gradient of `loss_fn` at `params`
/// against centered differences with step [`FD_STEP`], block by block.
pub fn finite_diff_check<P, F>(
    label: &str,
    params: &P,
    analytic: &[f64],
    loss_fn: F,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    P: ParamSet + Clone,
    F: Fn(&P) -> Result<f64>,
{
    let base = params.flatten();
    if analytic.len() != base.len() {
        return Err(Error::shape(
            "finite_diff_check",
            format!("{} parameters", base.len()),
            format!("{} gradient entries", analytic.len()),
        ));
    }
    let mut probe = params.clone();
    let mut flat = base.clone();
    let mut eval = |flat: &[f64]| -> Result<f64> {
        probe.assign_flat(flat)?;
        loss_fn(&probe)
    };
    let mut blocks = Vec::new();
    for block in params.blocks() {
        let mut check = BlockCheck {
            name: block.name.clone(),
            len: block.len(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            worst_index: 0,
        };
        for (j, i) in block.range().enumerate() {
            flat[i] = base[i] + FD_STEP;
            let up = eval(&flat)?;
            flat[i] = base[i] - FD_STEP;
            let down = eval(&flat)?;
            flat[i] = base[i];
            let numeric = (up - down) / (2.0 * FD_STEP);
            let rel = relative_error(analytic[i], numeric);
            let rel = if rel.is_nan() { f64::INFINITY } else { rel };
            if rel > check.max_rel_error {
                check.max_rel_error = rel;
                check.worst_index = j;
            }
            check.max_abs_error = check.max_abs_error.max((analytic[i] - numeric).abs());
        }
        blocks.push(check);
    }
    Ok(GradCheckReport {
        label: label.to_string(),
        tolerance,
        blocks,
    })
}

/// Components covered by the finite-difference suite.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradCheckTarget {
    RnnCell,
    LstmCell,
    OdeRnn,
    OdeLstm,
    LatentOdeRnn,
    LatentOdeLstm,
}

impl GradCheckTarget {
    pub const ALL: [GradCheckTarget; 6] = [
        GradCheckTarget::RnnCell,
        GradCheckTarget::LstmCell,
        GradCheckTarget::OdeRnn,
        GradCheckTarget::OdeLstm,
        GradCheckTarget::LatentOdeRnn,
        GradCheckTarget::LatentOdeLstm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GradCheckTarget::RnnCell => "rnn-cell",
            GradCheckTarget::LstmCell => "lstm-cell",
            GradCheckTarget::OdeRnn => "ode-rnn",
            GradCheckTarget::OdeLstm => "ode-lstm",
            GradCheckTarget::LatentOdeRnn => "latent-ode-rnn",
            GradCheckTarget::LatentOdeLstm => "latent-ode-lstm",
        }
    }

    pub fn parse(s: &str) -> Option<GradCheckTarget> {
        Self::ALL.into_iter().find(|t| t.name() == s)
    }
}

/// Sizes used by the suite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckSizes {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub length: usize,
}

impl Default for GradCheckSizes {
    fn default() -> Self {
        GradCheckSizes {
            input_dim: 2,
            hidden_dim: 3,
            latent_dim: 2,
            length: 4,
        }
    }
}

/// Random strictly increasing times and values.
pub fn random_sequence(rng: &mut Rng, len: usize, dim: usize) -> Result<TimedSequence> {
    let mut t = rng.uniform(-0.5, 0.5);
    let mut times = Vec::with_capacity(len);
    let mut values = Vec::with_capacity(len);
    for _ in 0..len {
        times.push(t);
        values.push(rng.uniform_vector(dim, 1.0));
        t += rng.uniform(0.1, 0.6);
    }
    TimedSequence::new(times, values)
}

fn unroll_loss<C: Cell>(
    cell: &C,
    init: &CellState,
    xs: &[Vector],
    ws: &[Vector],
    u: &Vector,
) -> f64 {
    let mut state = init.clone();
    let mut total = 0.0;
    for (x, w) in xs.iter().zip(ws) {
        state = cell.step(&state.c, &state.h, x).0;
        total += w.dot(&state.h);
    }
    total + u.dot(&state.c)
}

fn unroll_grad<C: Cell>(
    cell: &C,
    init: &CellState,
    xs: &[Vector],
    ws: &[Vector],
    u: &Vector,
) -> Vec<f64> {
    let mut state = init.clone();
    let mut caches = Vec::new();
    for x in xs {
        let (next, cache) = cell.step(&state.c, &state.h, x);
        caches.push(cache);
        state = next;
    }
    let mut grad = cell.zeros_like();
    let mut dh = Vector::zeros(cell.hidden_dim());
    let mut dc = u.clone();
    for k in (0..xs.len()).rev() {
        dh.add_assign(&ws[k]);
        let (dh_in, dc_prev) = cell.step_backward(&caches[k], &dh, &dc, &mut grad);
        dh = dh_in;
        dc = dc_prev;
    }
    grad.flatten()
}

fn check_cell<C: Cell>(
    label: &str,
    cell: &C,
    rng: &mut Rng,
    sizes: &GradCheckSizes,
    tol: f64,
) -> Result<GradCheckReport> {
    let n = sizes.hidden_dim;
    let init = CellState {
        h: rng.uniform_vector(n, 0.5),
        c: rng.uniform_vector(n, 0.5),
    };
    let xs: Vec<Vector> = (0..sizes.length)
        .map(|_| rng.uniform_vector(sizes.input_dim, 1.0))
        .collect();
    let ws: Vec<Vector> = (0..sizes.length)
        .map(|_| rng.uniform_vector(n, 1.0))
        .collect();
    let u = rng.uniform_vector(n, 1.0);
    let analytic = unroll_grad(cell, &init, &xs, &ws, &u);
    finite_diff_check(
        label,
        cell,
        &analytic,
        |c| Ok(unroll_loss(c, &init, &xs, &ws, &u)),
        tol,
    )
}

fn check_encoder<C: Cell>(
    label: &str,
    enc: &OdeRecurrent<C>,
    rng: &mut Rng,
    sizes: &GradCheckSizes,
    tol: f64,
) -> Result<GradCheckReport> {
    let n = sizes.hidden_dim;
    let seq = random_sequence(rng, sizes.length, sizes.input_dim)?;
    let ws: Vec<Vector> = (0..sizes.length)
        .map(|_| rng.uniform_vector(n, 1.0))
        .collect();
    let u = rng.uniform_vector(n, 1.0);
    let loss_of = |e: &OdeRecurrent<C>| -> Result<f64> {
        let out = e.encode(&seq, false)?;
        Ok(out
            .outputs
            .iter()
            .zip(&ws)
            .map(|(h, w)| w.dot(h))
            .sum::<f64>()
            + u.dot(&out.final_state.c))
    };
    let (_, tape) = enc.encode_taped(&seq, false)?;
    let mut grad = enc.zeros_like();
    let d_final = CellState {
        h: Vector::zeros(n),
        c: u.clone(),
    };
    enc.backward(&tape, &ws, &d_final, &mut grad)?;
    finite_diff_check(label, enc, &grad.flatten(), loss_of, tol)
}

/// Gradient check of a full latent model on one example with frozen noise,
/// using the training loss with the given KL weight. Prediction times
/// extend half a unit past both ends of the observations.
pub fn check_latent_model(
    label: &str,
    model: &LatentOdeModel,
    seq: &TimedSequence,
    targets_rng: &mut Rng,
    eps: &Vector,
    spec: &LossSpec,
    tol: f64,
) -> Result<GradCheckReport> {
    let mut times = vec![seq.times()[0] - 0.5];
    times.extend_from_slice(seq.times());
    times.push(seq.times()[seq.len() - 1] + 0.5);
    let targets: Vec<Vector> = times
        .iter()
        .map(|_| targets_rng.uniform_vector(model.output_dim(), 1.0))
        .collect();
    let loss_of = |m: &LatentOdeModel| -> Result<f64> {
        let (preds, path) = m.forward_with_eps(seq, &times, eps)?;
        Ok(loss(&preds, &targets, &path, spec)?.0.total)
    };
    let (preds, tape) = model.forward_taped(seq, &times, eps)?;
    let (_, cot) = loss(&preds, &targets, tape.path(), spec)?;
    let grad = model.backward(&tape, &cot)?;
    finite_diff_check(label, model, &grad.flatten(), loss_of, tol)
}

/// Runs the finite-difference check for one target on a small random instance.
pub fn run_gradcheck(
    target: GradCheckTarget,
    sizes: &GradCheckSizes,
    seed: u64,
    tol: f64,
) -> Result<GradCheckReport> {
    let mut rng = Rng::new(seed);
    let (d, n) = (sizes.input_dim, sizes.hidden_dim);
    let label = target.name();
    match target {
        GradCheckTarget::RnnCell => {
            let cell = RnnCell::init(d, n, Activation::Tanh, &mut rng);
            check_cell(label, &cell, &mut rng, sizes, tol)
        }
        GradCheckTarget::LstmCell => {
            let cell = LstmCell::init(d, n, &mut rng);
            check_cell(label, &cell, &mut rng, sizes, tol)
        }
        GradCheckTarget::OdeRnn => {
            let cell = RnnCell::init(d, n, Activation::Tanh, &mut rng);
            let field = NeuralField::init(n, &[4], false, &mut rng);
            check_encoder(
                label,
                &OdeRecurrent::new(cell, field, 3),
                &mut rng,
                sizes,
                tol,
            )
        }
        GradCheckTarget::OdeLstm => {
            let cell = LstmCell::init(d, n, &mut rng);
            let field = NeuralField::init(n, &[4], false, &mut rng);
            check_encoder(
                label,
                &OdeRecurrent::new(cell, field, 3),
                &mut rng,
                sizes,
                tol,
            )
        }
        GradCheckTarget::LatentOdeRnn | GradCheckTarget::LatentOdeLstm => {
            let variant = if target == GradCheckTarget::LatentOdeRnn {
                ModelVariant::LATENT_ODE_RNN
            } else {
                ModelVariant::LATENT_ODE_LSTM
            };
            let mut cfg = ModelConfig::small(d, sizes.latent_dim);
            cfg.hidden_dim = n;
            cfg.encoder_field_hidden = vec![4];
            cfg.translator_hidden = 4;
            cfg.dynamics_hidden = vec![4];
            cfg.output_hidden = 4;
            let model = LatentOdeModel::init(variant, &cfg, seed)?;
            let seq = random_sequence(&mut rng, sizes.length, d)?;
            let eps = model.sample_eps(&mut rng)?;
            check_latent_model(
                label,
                &model,
                &seq,
                &mut rng,
                &eps,
                &LossSpec { kl_weight: 1.0 },
                tol,
            )
        }
    }
}
