//! Dataset construction: spirals, daily CSV series, normalization and
//! seen/predict windowing.

mod cache;
mod daily;
mod spiral;

pub use cache::{
    decode_cache, encode_cache, load_or_build, spec_hash, CachedData, CACHE_MAGIC, CACHE_VERSION,
};
pub use daily::{load_csv_daily, parse_csv_daily, DailySeries, Schema};
pub use spiral::{chirality, gen_spirals, SpiralSet, SpiralSpec, CLOCKWISE, COUNTERCLOCKWISE};

use serde::{Deserialize, Serialize};

use crate::cells::TimedSequence;
use crate::error::{Error, Result};
use crate::numcore::Vector;
use crate::train::TrainExample;

/// Sequences with aligned targets and an integer label per sequence.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub sequences: Vec<TimedSequence>,
    pub targets: Vec<TimedSequence>,
    pub labels: Vec<u32>,
    /// Set once the values have been standardized.
    pub stats: Option<NormStats>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn push(&mut self, seq: TimedSequence, target: TimedSequence, label: u32) {
        self.sequences.push(seq);
        self.targets.push(target);
        self.labels.push(label);
    }

    pub fn dim(&self) -> Option<usize> {
        self.sequences.first().map(TimedSequence::dim)
    }

    /// Checks that every sequence and target share one feature dimension.
    pub fn validate(&self) -> Result<()> {
        if self.targets.len() != self.sequences.len() || self.labels.len() != self.sequences.len() {
            return Err(Error::invalid(
                "dataset sequences, targets and labels differ in count",
            ));
        }
        if let Some(d) = self.dim() {
            for (i, (s, t)) in self.sequences.iter().zip(&self.targets).enumerate() {
                if s.dim() != d || t.dim() != d {
                    return Err(Error::shape(
                        "dataset",
                        format!("sequence {i} dims {}/{}", s.dim(), t.dim()),
                        format!("dim {d}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Training examples: encode each sequence, predict its targets.
    pub fn examples(&self) -> Vec<TrainExample> {
        self.sequences
            .iter()
            .zip(&self.targets)
            .map(|(s, t)| TrainExample {
                input: s.clone(),
                target_times: t.times().to_vec(),
                targets: t.values().to_vec(),
            })
            .collect()
    }
}

/// Per-feature mean and (population) standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vector,
    pub std: Vector,
}

impl NormStats {
    /// Statistics over every value; a zero-variance feature gets std 1.
    pub fn from_values<'a>(values: impl IntoIterator<Item = &'a Vector>) -> Result<NormStats> {
        let values: Vec<&Vector> = values.into_iter().collect();
        let first = values
            .first()
            .ok_or_else(|| Error::invalid("cannot normalize an empty dataset"))?;
        let d = first.len();
        let n = values.len() as f64;
        let mut mean = Vector::zeros(d);
        for v in &values {
            v.check_len("normalize", d)?;
            mean.add_assign(v);
        }
        let mean = mean.scale(1.0 / n);
        let mut var = Vector::zeros(d);
        for v in &values {
            for k in 0..d {
                let c = v[k] - mean[k];
                var.as_mut_slice()[k] += c * c;
            }
        }
        let std = Vector::from_vec(
            var.iter()
                .enumerate()
                .map(|(k, s)| {
                    let sd = (s / n).sqrt();
                    if sd == 0.0 {
                        log::warn!("feature {k} has zero variance; keeping it with std 1");
                        1.0
                    } else {
                        sd
                    }
                })
                .collect(),
        );
        Ok(NormStats { mean, std })
    }

    pub fn apply(&self, v: &Vector) -> Vector {
        Vector::from_vec(
            v.iter()
                .enumerate()
                .map(|(k, x)| (x - self.mean[k]) / self.std[k])
                .collect(),
        )
    }

    pub fn invert(&self, v: &Vector) -> Vector {
        Vector::from_vec(
            v.iter()
                .enumerate()
                .map(|(k, x)| x * self.std[k] + self.mean[k])
                .collect(),
        )
    }

    pub fn apply_sequence(&self, seq: &TimedSequence) -> Result<TimedSequence> {
        seq.with_values(seq.values().iter().map(|v| self.apply(v)).collect())
    }
}

/// Standardizes `ds` with statistics computed from its own sequence values.
pub fn normalize(ds: &Dataset) -> Result<(Dataset, NormStats)> {
    let stats = NormStats::from_values(ds.sequences.iter().flat_map(|s| s.values()))?;
    Ok((apply_stats(ds, &stats)?, stats))
}

/// Standardizes `ds` with statistics from elsewhere (typically the training split).
pub fn apply_stats(ds: &Dataset, stats: &NormStats) -> Result<Dataset> {
    Ok(Dataset {
        sequences: ds
            .sequences
            .iter()
            .map(|s| stats.apply_sequence(s))
            .collect::<Result<_>>()?,
        targets: ds
            .targets
            .iter()
            .map(|s| stats.apply_sequence(s))
            .collect::<Result<_>>()?,
        labels: ds.labels.clone(),
        stats: Some(stats.clone()),
    })
}

pub fn denormalize(values: &[Vector], stats: &NormStats) -> Vec<Vector> {
    values.iter().map(|v| stats.invert(v)).collect()
}

/// Lengths of one (seen, predict) pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowSpec {
    pub seen: usize,
    pub predict: usize,
}

impl WindowSpec {
    pub const fn new(seen: usize, predict: usize) -> Self {
        WindowSpec { seen, predict }
    }

    /// The four seen/predict layouts used for the daily datasets.
    pub const PROTOCOL: [WindowSpec; 4] = [
        WindowSpec::new(7, 7),
        WindowSpec::new(15, 15),
        WindowSpec::new(30, 30),
        WindowSpec::new(365, 60),
    ];

    pub fn validate(&self) -> Result<()> {
        if self.seen == 0 || self.predict == 0 {
            return Err(Error::invalid("window lengths must both be >= 1"));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        format!("D{}/{}", self.seen, self.predict)
    }
}

/// Consecutive non-overlapping (seen, predict) pairs; a trailing remainder
/// shorter than `seen + predict` is dropped.
pub fn window(
    seq: &TimedSequence,
    spec: WindowSpec,
) -> Result<Vec<(TimedSequence, TimedSequence)>> {
    spec.validate()?;
    let width = spec.seen + spec.predict;
    Ok((0..seq.len() / width)
        .map(|w| {
            let start = w * width;
            (
                seq.slice(start..start + spec.seen),
                seq.slice(start + spec.seen..start + width),
            )
        })
        .collect())
}

/// Windows whose predict blocks tile `test` consecutively, each preceded by
/// the `seen` points immediately before it in `history ++ test`. Blocks
/// without enough preceding points are skipped.
pub fn context_windows(
    history: &TimedSequence,
    test: &TimedSequence,
    spec: WindowSpec,
) -> Result<Vec<(TimedSequence, TimedSequence)>> {
    spec.validate()?;
    let all = history.concat(test)?;
    let offset = history.len();
    let mut out = Vec::new();
    for b in 0..test.len() / spec.predict {
        let start = offset + b * spec.predict;
        if start < spec.seen {
            continue;
        }
        out.push((
            all.slice(start - spec.seen..start),
            all.slice(start..start + spec.predict),
        ));
    }
    Ok(out)
}

/// Training examples from windows: reconstruct the seen part and predict
/// the future part.
pub fn window_examples(windows: &[(TimedSequence, TimedSequence)]) -> Result<Vec<TrainExample>> {
    windows
        .iter()
        .map(|(seen, future)| {
            let both = seen.concat(future)?;
            TrainExample::new(seen.clone(), both.times().to_vec(), both.values().to_vec())
        })
        .collect()
}
