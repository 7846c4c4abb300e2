use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{LatentCotangents, LatentPath};
use crate::numcore::Vector;

/// Mean squared reconstruction error plus `kl_weight` times the KL
/// divergence of the posterior from the standard normal prior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kl_weight: f64,
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec { kl_weight: 0.0 }
    }
}

impl LossSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.kl_weight >= 0.0 && self.kl_weight.is_finite()) {
            return Err(Error::invalid(format!(
                "kl_weight must be finite and >= 0, got {}",
                self.kl_weight
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub mse: f64,
    pub kl: f64,
}

/// `½ Σ (σ² + μ² − 1 − log σ²)` with `σ = exp(log_sigma)`.
pub fn kl_divergence(mu: &[f64], log_sigma: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(log_sigma)
        .map(|(&m, &ls)| (2.0 * ls).exp() + m * m - 1.0 - 2.0 * ls)
        .sum::<f64>()
}

/// Mean squared error over every step and dimension.
pub fn mse(predictions: &[Vector], targets: &[Vector]) -> Result<f64> {
    check_aligned(predictions, targets)?;
    let count = (predictions.len() * predictions[0].len()) as f64;
    let sum: f64 = predictions
        .iter()
        .zip(targets)
        .flat_map(|(p, t)| p.iter().zip(t.iter()).map(|(a, b)| (a - b) * (a - b)))
        .sum();
    Ok(sum / count)
}

fn check_aligned(predictions: &[Vector], targets: &[Vector]) -> Result<()> {
    if predictions.len() != targets.len() {
        return Err(Error::shape(
            "loss",
            format!("{} predictions", predictions.len()),
            format!("{} targets", targets.len()),
        ));
    }
    if predictions.is_empty() {
        return Err(Error::invalid("loss needs at least one prediction"));
    }
    let p = predictions[0].len();
    for (i, (a, b)) in predictions.iter().zip(targets).enumerate() {
        if a.len() != p || b.len() != p {
            return Err(Error::shape(
                "loss",
                format!("prediction {i} [{}]", a.len()),
                format!("target [{}] (expected {p})", b.len()),
            ));
        }
    }
    Ok(())
}

/// Loss value and its cotangents with respect to predictions, `μ` and `log σ`.
pub fn loss(
    predictions: &[Vector],
    targets: &[Vector],
    latent: &LatentPath,
    spec: &LossSpec,
) -> Result<(LossValue, LatentCotangents)> {
    check_aligned(predictions, targets)?;
    let count = (predictions.len() * predictions[0].len()) as f64;
    let mse = mse(predictions, targets)?;
    let d_predictions = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| p.sub(t).scale(2.0 / count))
        .collect();
    let beta = spec.kl_weight;
    let (kl, d_mu, d_log_sigma) = if beta == 0.0 {
        let l = latent.mu.len();
        (0.0, Vector::zeros(l), Vector::zeros(l))
    } else {
        let kl = kl_divergence(&latent.mu, &latent.log_sigma);
        let d_mu = latent.mu.scale(beta);
        let d_log_sigma = latent.sigma.map(|s| beta * (s * s - 1.0));
        (kl, d_mu, d_log_sigma)
    };
    Ok((
        LossValue {
            total: mse + beta * kl,
            mse,
            kl,
        },
        LatentCotangents {
            d_predictions,
            d_mu,
            d_log_sigma,
        },
    ))
}
