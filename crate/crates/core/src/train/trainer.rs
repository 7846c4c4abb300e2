use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{clip_flat, loss, AdamConfig, AdamState, ClipRule, LossSpec, LossValue};
use crate::cells::TimedSequence;
use crate::error::{Error, Result};
use crate::latent::LatentOdeModel;
use crate::numcore::{Rng, Vector};
use crate::params::ParamSet;

/// One training sequence: the observations fed to the encoder and the
/// targets the decoder should produce at `target_times`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainExample {
    pub input: TimedSequence,
    pub target_times: Vec<f64>,
    pub targets: Vec<Vector>,
}

impl TrainExample {
    pub fn new(input: TimedSequence, target_times: Vec<f64>, targets: Vec<Vector>) -> Result<Self> {
        if target_times.len() != targets.len() {
            return Err(Error::shape(
                "train example",
                format!("{} target times", target_times.len()),
                format!("{} targets", targets.len()),
            ));
        }
        if targets.is_empty() {
            return Err(Error::invalid("train example needs at least one target"));
        }
        Ok(TrainExample {
            input,
            target_times,
            targets,
        })
    }

    /// Reconstruct the observations themselves.
    pub fn reconstruction(seq: TimedSequence) -> Self {
        TrainExample {
            target_times: seq.times().to_vec(),
            targets: seq.values().to_vec(),
            input: seq,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub loss: LossSpec,
    /// Overrides the clipping rule implied by the model variant.
    pub clip: Option<ClipRule>,
    pub seed: u64,
    pub shuffle: bool,
    /// Run per-sequence passes on the rayon pool. Results are reduced in
    /// sequence order either way.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            adam: AdamConfig::default(),
            loss: LossSpec::default(),
            clip: None,
            seed: 0,
            shuffle: true,
            parallel: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if !(self.adam.learning_rate > 0.0 && self.adam.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if let Some(rule) = self.clip {
            ClipRule::new(rule.threshold)?;
        }
        self.loss.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sequence loss over the epoch, before each batch's update.
    pub loss: f64,
    /// Mean over the epoch's batches of the global gradient norm before clipping.
    pub pre_clip_norm: f64,
    /// Largest global gradient norm applied in the epoch, after clipping.
    pub post_clip_norm: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean loss over the whole dataset before the first update.
    pub initial_loss: Option<f64>,
    /// Mean loss after the last update, with the same noise draws as `initial_loss`.
    pub final_loss: Option<f64>,
    pub records: Vec<EpochRecord>,
}

pub const TRAIN_LOG_HEADER: &str = "epoch,loss,pre_clip_norm,post_clip_norm,wall_ms";

impl TrainLog {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn max_post_clip_norm(&self) -> Option<f64> {
        self.records
            .iter()
            .map(|r| r.post_clip_norm)
            .reduce(f64::max)
    }

    /// Bitwise comparison of everything except wall-clock timings.
    pub fn same_values(&self, other: &TrainLog) -> bool {
        let bits = |x: Option<f64>| x.map(f64::to_bits);
        bits(self.initial_loss) == bits(other.initial_loss)
            && bits(self.final_loss) == bits(other.final_loss)
            && self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.loss.to_bits() == b.loss.to_bits()
                    && a.pre_clip_norm.to_bits() == b.pre_clip_norm.to_bits()
                    && a.post_clip_norm.to_bits() == b.post_clip_norm.to_bits()
            })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(TRAIN_LOG_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{:e},{:e},{:e},{:.3}",
                r.epoch, r.loss, r.pre_clip_norm, r.post_clip_norm, r.wall_ms
            );
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Loss and parameter gradient of one example under fixed noise.
pub fn example_gradient(
    model: &LatentOdeModel,
    example: &TrainExample,
    eps: &Vector,
    spec: &LossSpec,
) -> Result<(LossValue, LatentOdeModel)> {
    let (preds, tape) = model.forward_taped(&example.input, &example.target_times, eps)?;
    let (value, cot) = loss(&preds, &example.targets, tape.path(), spec)?;
    let grad = model.backward(&tape, &cot)?;
    Ok((value, grad))
}

/// Mean loss over `data` with one noise vector per example.
pub fn evaluate_loss(
    model: &LatentOdeModel,
    data: &[TrainExample],
    eps: &[Vector],
    spec: &LossSpec,
) -> Result<f64> {
    if data.len() != eps.len() {
        return Err(Error::shape(
            "evaluate_loss",
            format!("{} examples", data.len()),
            format!("{} noise vectors", eps.len()),
        ));
    }
    let values = data
        .par_iter()
        .zip(eps.par_iter())
        .map(|(ex, e)| {
            let (preds, path) = model.forward_with_eps(&ex.input, &ex.target_times, e)?;
            Ok(loss(&preds, &ex.targets, &path, spec)?.0.total)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(values.iter().sum::<f64>() / data.len().max(1) as f64)
}

fn diverged(epoch: usize, reason: impl Into<String>, log: &TrainLog) -> Error {
    Error::TrainingDiverged {
        epoch,
        reason: reason.into(),
        log: Box::new(log.clone()),
    }
}

/// Trains `model` in place with Adam on mean-over-batch gradients,
/// clipping when the config or the variant asks for it.
pub fn train_epochs(
    model: &mut LatentOdeModel,
    data: &[TrainExample],
    config: &TrainConfig,
) -> Result<TrainLog> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("training data is empty"));
    }
    let clip = match config.clip {
        Some(rule) => Some(rule),
        None => model.variant.clip.map(ClipRule::new).transpose()?,
    };
    let mut log = TrainLog::default();
    if config.epochs == 0 {
        return Ok(log);
    }

    let root = Rng::new(config.seed);
    let mut order_rng = root.fork(100);
    let mut noise_rng = root.fork(101);
    let mut eval_rng = root.fork(102);
    let eval_eps = data
        .iter()
        .map(|_| model.sample_eps(&mut eval_rng))
        .collect::<Result<Vec<_>>>()?;
    let initial = evaluate_loss(model, data, &eval_eps, &config.loss)?;
    log.initial_loss = Some(initial);
    if !initial.is_finite() {
        return Err(diverged(0, format!("initial loss is {initial}"), &log));
    }

    let mut params = model.flatten();
    let mut adam = AdamState::new(params.len(), config.adam);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..config.epochs {
        let start = Instant::now();
        if config.shuffle {
            for i in (1..order.len()).rev() {
                order.swap(i, order_rng.below(i + 1));
            }
        }
        let mut loss_sum = 0.0;
        let mut pre_sum = 0.0;
        let mut post_max: f64 = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(config.batch_size) {
            let eps = batch
                .iter()
                .map(|_| model.sample_eps(&mut noise_rng))
                .collect::<Result<Vec<_>>>()?;
            let run = |(&i, e): (&usize, &Vector)| -> Result<(f64, Vec<f64>)> {
                let (value, grad) = example_gradient(model, &data[i], e, &config.loss)?;
                Ok((value.total, grad.flatten()))
            };
            let results: Vec<Result<(f64, Vec<f64>)>> = if config.parallel {
                batch.par_iter().zip(eps.par_iter()).map(run).collect()
            } else {
                batch.iter().zip(eps.iter()).map(run).collect()
            };
            let mut grad = vec![0.0; params.len()];
            for r in results {
                let (value, g) = r.map_err(|e| diverged(epoch, e.to_string(), &log))?;
                loss_sum += value;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            let inv = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);

            let (pre, post) = match &clip {
                Some(rule) => {
                    let out = clip_flat(&mut grad, rule)
                        .map_err(|e| diverged(epoch, e.to_string(), &log))?;
                    (out.pre_norm, out.post_norm)
                }
                None => {
                    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
                        let name = model
                            .blocks()
                            .into_iter()
                            .find(|b| b.range().contains(&i))
                            .map(|b| b.name)
                            .unwrap_or_default();
                        return Err(diverged(
                            epoch,
                            format!("non-finite gradient in `{name}`"),
                            &log,
                        ));
                    }
                    let n = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                    (n, n)
                }
            };
            pre_sum += pre;
            post_max = post_max.max(post);
            batches += 1;
            adam.step_flat(&mut params, &grad)?;
            model.assign_flat(&params)?;
        }
        let record = EpochRecord {
            epoch,
            loss: loss_sum / data.len() as f64,
            pre_clip_norm: pre_sum / batches as f64,
            post_clip_norm: post_max,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        log::debug!(
            "epoch {epoch}: loss {:.6e} grad {:.3e} -> {:.3e}",
            record.loss,
            record.pre_clip_norm,
            record.post_clip_norm
        );
        log.records.push(record);
        if !record.loss.is_finite() || !params.iter().all(|p| p.is_finite()) {
            return Err(diverged(
                epoch,
                format!("loss became {}", record.loss),
                &log,
            ));
        }
    }
    let fin = evaluate_loss(model, data, &eval_eps, &config.loss)
        .map_err(|e| diverged(config.epochs, e.to_string(), &log))?;
    log.final_loss = Some(fin);
    Ok(log)
}
