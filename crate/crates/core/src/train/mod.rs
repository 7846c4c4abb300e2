//! Loss, optimization, clipping, the training loop and gradient diagnostics.

mod adam;
mod clip;
mod gradcheck;
mod loss;
mod probe;
mod trainer;

pub use adam::{AdamConfig, AdamState};
pub use clip::{clip_flat, clip_gradients, ClipOutcome, ClipRule};
pub use gradcheck::{
    check_latent_model, finite_diff_check, random_sequence, relative_error, run_gradcheck,
    BlockCheck, GradCheckReport, GradCheckSizes, GradCheckTarget, FD_STEP, REL_FLOOR,
};
pub use loss::{kl_divergence, loss, mse, LossSpec, LossValue};
pub use probe::{
    grad_flow_probe, scaled_recurrent, GradReport, ProbeCell, ProbeConfig, Regime, REGIME_BAND,
};
pub use trainer::{
    evaluate_loss, example_gradient, train_epochs, EpochRecord, TrainConfig, TrainExample,
    TrainLog, TRAIN_LOG_HEADER,
};

/// Least-squares slope of `y` against `x`; `None` with fewer than three
/// points or when every `x` is equal.
pub fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    slope.is_finite().then_some(slope)
}

#[cfg(test)]
mod tests;
