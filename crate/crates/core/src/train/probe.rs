//! Empirical Jacobian-chain norms `‖∂s_N/∂s_k‖` along a recurrent chain.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::fit_slope;
use crate::cells::{Cell, CellState, LstmCell, OdeRecurrent, RnnCell, TimedSequence};
use crate::error::{Error, Result};
use crate::numcore::{Activation, Matrix, Rng, Vector};
use crate::odesolve::NeuralField;

/// Slopes inside `±REGIME_BAND` count as stable.
pub const REGIME_BAND: f64 = 0.01;

const POWER_ITERS: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeCell {
    /// Plain RNN; the hidden-state path is measured.
    Rnn,
    /// LSTM with all recurrent matrices scaled; the memory path is measured.
    Lstm,
    /// LSTM with the forget gate saturated open and the input gate shut.
    LstmCarousel,
}

impl ProbeCell {
    pub fn name(self) -> &'static str {
        match self {
            ProbeCell::Rnn => "rnn",
            ProbeCell::Lstm => "lstm",
            ProbeCell::LstmCarousel => "lstm-carousel",
        }
    }
}

impl FromStr for ProbeCell {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "rnn" => Ok(ProbeCell::Rnn),
            "lstm" => Ok(ProbeCell::Lstm),
            "lstm-carousel" | "carousel" => Ok(ProbeCell::LstmCarousel),
            other => Err(format!(
                "unknown probe cell `{other}` (expected rnn, lstm or lstm-carousel)"
            )),
        }
    }
}

impl fmt::Display for ProbeCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Vanishing,
    Stable,
    Exploding,
}

impl Regime {
    pub fn from_slope(slope: f64) -> Regime {
        if slope < -REGIME_BAND {
            Regime::Vanishing
        } else if slope > REGIME_BAND {
            Regime::Exploding
        } else {
            Regime::Stable
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::Vanishing => "vanishing",
            Regime::Stable => "stable",
            Regime::Exploding => "exploding",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub cell: ProbeCell,
    pub hidden_dim: usize,
    /// Target spectral radius of the recurrent weight matrices.
    pub scale: f64,
    /// Number of cell applications `N`.
    pub length: usize,
    pub seed: u64,
    /// Forget/input gate bias magnitude for the carousel.
    pub saturation: f64,
}

impl ProbeConfig {
    pub fn new(cell: ProbeCell, scale: f64, length: usize) -> Self {
        ProbeConfig {
            cell,
            hidden_dim: 16,
            scale,
            length,
            seed: 0,
            saturation: 30.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradReport {
    pub cell: ProbeCell,
    pub scale: f64,
    pub length: usize,
    /// `(k, ‖∂s_N/∂s_k‖₂)` for `k = 0..N`.
    pub chain_norms: Vec<(usize, f64)>,
    /// Least-squares slope of `ln ‖∂s_N/∂s_k‖` against `N − k`.
    pub slope: Option<f64>,
    pub regime: Option<Regime>,
    /// Spectral radius estimate of the scaled recurrent matrix.
    pub spectral_radius: f64,
    /// Operator 2-norm estimate of the same matrix.
    pub operator_norm: f64,
    /// `ln(ρ γ)` with `γ` the activation derivative bound (plain RNN only).
    pub predicted_slope_spectral: Option<f64>,
    /// `ln(‖W‖ γ)` (plain RNN only).
    pub predicted_slope_operator: Option<f64>,
    /// Global gradient norms per training epoch, when attached.
    pub epoch_grad_norms: Vec<f64>,
}

impl GradReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,norm\n");
        for (k, norm) in &self.chain_norms {
            let _ = writeln!(s, "{k},{norm:e}");
        }
        let slope = self.slope.map_or("NA".to_string(), |v| format!("{v:.6}"));
        let regime = self.regime.map_or("undefined", Regime::name);
        let _ = writeln!(
            s,
            "# slope={slope} regime={regime} spectral_radius={:.6} operator_norm={:.6}",
            self.spectral_radius, self.operator_norm
        );
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Square matrix with standard-normal entries rescaled to spectral radius `scale`.
pub fn scaled_recurrent(rng: &mut Rng, n: usize, scale: f64) -> Result<Matrix> {
    let w = rng.gaussian_matrix(n, n);
    let rho = w.spectral_radius_est(POWER_ITERS)?;
    if rho == 0.0 {
        return Err(Error::invalid("random recurrent matrix is nilpotent"));
    }
    Ok(w.scale(scale / rho))
}

/// Runs the probe: zero inputs from the zero state, so the chain sits at a
/// fixed operating point, then one reverse pass per unit cotangent.
pub fn grad_flow_probe(config: &ProbeConfig) -> Result<GradReport> {
    if config.length == 0 {
        return Err(Error::invalid("probe length must be >= 1"));
    }
    if config.hidden_dim == 0 || !(config.scale >= 0.0 && config.scale.is_finite()) {
        return Err(Error::invalid(
            "probe needs hidden_dim > 0 and a finite scale >= 0",
        ));
    }
    let n = config.hidden_dim;
    let mut rng = Rng::new(config.seed);
    let seq = TimedSequence::new(
        (0..config.length).map(|i| i as f64).collect(),
        vec![Vector::zeros(1); config.length],
    )?;
    let field = NeuralField::zeros(n, &[], false);
    match config.cell {
        ProbeCell::Rnn => {
            let mut cell = RnnCell::init(1, n, Activation::Tanh, &mut rng);
            cell.w_feedback = scaled_recurrent(&mut rng, n, config.scale)?;
            cell.b.fill(0.0);
            let gamma = cell.activation.deriv_bound();
            let (rho, op) = spectra(&cell.w_feedback)?;
            let enc = OdeRecurrent::new(cell, field, 1);
            let norms = chain_norms(&enc, &seq, false)?;
            let mut report = build_report(config, norms, rho, op);
            report.predicted_slope_spectral = (rho > 0.0).then(|| (rho * gamma).ln());
            report.predicted_slope_operator = (op > 0.0).then(|| (op * gamma).ln());
            Ok(report)
        }
        ProbeCell::Lstm | ProbeCell::LstmCarousel => {
            let mut cell = if config.cell == ProbeCell::Lstm {
                let mut c = LstmCell::init(1, n, &mut rng);
                for b in [&mut c.b_in, &mut c.b_f, &mut c.b_o, &mut c.b_c] {
                    b.fill(0.0);
                }
                c
            } else {
                let mut c = LstmCell::carousel(1, n, config.saturation);
                c.w_xin = rng.uniform_matrix(n, 1, 1.0);
                c
            };
            cell.w_hin = scaled_recurrent(&mut rng, n, config.scale)?;
            cell.w_hf = scaled_recurrent(&mut rng, n, config.scale)?;
            cell.w_ho = scaled_recurrent(&mut rng, n, config.scale)?;
            cell.w_hc = scaled_recurrent(&mut rng, n, config.scale)?;
            let (rho, op) = spectra(&cell.w_hc)?;
            let enc = OdeRecurrent::new(cell, field, 1);
            let norms = chain_norms(&enc, &seq, true)?;
            Ok(build_report(config, norms, rho, op))
        }
    }
}

fn spectra(w: &Matrix) -> Result<(f64, f64)> {
    Ok((
        w.spectral_radius_est(POWER_ITERS)?,
        w.operator_norm_est(POWER_ITERS),
    ))
}

/// `‖∂s_N/∂s_k‖₂` for `k = 0..N`, where `s` is `h` or (with `memory`) `C`.
fn chain_norms<C: Cell>(
    enc: &OdeRecurrent<C>,
    seq: &TimedSequence,
    memory: bool,
) -> Result<Vec<(usize, f64)>> {
    let n = enc.hidden_dim();
    let len = seq.len();
    let (_, tape) = enc.encode_taped(seq, false)?;
    let mut jac = vec![Matrix::zeros(n, n); len];
    for j in 0..n {
        let mut d_final = CellState::zeros(n);
        if memory {
            d_final.c = Vector::basis(n, j);
        } else {
            d_final.h = Vector::basis(n, j);
        }
        let mut scratch = enc.clone();
        let back = enc.backward(&tape, &[], &d_final, &mut scratch)?;
        for (k, m) in jac.iter_mut().enumerate() {
            let cot = &back.state_cotangents[k];
            let row = if memory { &cot.c } else { &cot.h };
            for (col, v) in row.iter().enumerate() {
                m[(j, col)] = *v;
            }
        }
    }
    Ok(jac
        .iter()
        .enumerate()
        .map(|(k, m)| (k, m.operator_norm_est(POWER_ITERS)))
        .collect())
}

fn build_report(config: &ProbeConfig, norms: Vec<(usize, f64)>, rho: f64, op: f64) -> GradReport {
    let pts: Vec<(f64, f64)> = norms
        .iter()
        .filter(|(_, v)| *v > 0.0 && v.is_finite())
        .map(|&(k, v)| ((config.length - k) as f64, v.ln()))
        .collect();
    let slope = fit_slope(&pts);
    GradReport {
        cell: config.cell,
        scale: config.scale,
        length: config.length,
        chain_norms: norms,
        slope,
        regime: slope.map(Regime::from_slope),
        spectral_radius: rho,
        operator_norm: op,
        predicted_slope_spectral: None,
        predicted_slope_operator: None,
        epoch_grad_norms: Vec::new(),
    }
}
