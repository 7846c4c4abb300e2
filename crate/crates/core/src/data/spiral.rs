use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::cells::TimedSequence;
use crate::error::{Error, Result};
use crate::numcore::{Rng, Vector};

/// Archimedean spirals `r = a + b φ`, half turning clockwise and half
/// counterclockwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpiralSpec {
    /// Sequences of each chirality.
    pub n_per_direction: usize,
    /// Points on the dense, regularly sampled curve.
    pub dense_len: usize,
    /// Points kept per training sequence.
    pub subsample_len: usize,
    /// Standard deviation of the Gaussian noise added to training coordinates.
    pub noise_std: f64,
    pub a: f64,
    pub b: f64,
    pub phi_start: f64,
    pub phi_end: f64,
    /// The dense grid spans `[0, t_end]`.
    pub t_end: f64,
    pub seed: u64,
}

impl Default for SpiralSpec {
    fn default() -> Self {
        SpiralSpec {
            n_per_direction: 100,
            dense_len: 500,
            subsample_len: 30,
            noise_std: 0.1,
            a: 0.0,
            b: 0.3,
            phi_start: 1.0,
            phi_end: 6.0 * PI,
            t_end: 6.0 * PI,
            seed: 0,
        }
    }
}

impl SpiralSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_direction == 0 {
            return Err(Error::invalid("n_per_direction must be positive"));
        }
        if self.dense_len < 2 {
            return Err(Error::invalid("dense_len must be at least 2"));
        }
        if self.subsample_len == 0 || self.subsample_len > self.dense_len {
            return Err(Error::invalid(format!(
                "subsample_len {} must be in 1..={}",
                self.subsample_len, self.dense_len
            )));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::invalid("noise_std must be finite and >= 0"));
        }
        let finite = [self.a, self.b, self.phi_start, self.phi_end, self.t_end];
        if finite.iter().any(|v| !v.is_finite())
            || self.phi_end <= self.phi_start
            || self.t_end <= 0.0
        {
            return Err(Error::invalid(
                "spiral curve parameters must be finite with phi_end > phi_start, t_end > 0",
            ));
        }
        Ok(())
    }

    /// Regular time grid of the dense curve.
    pub fn dense_times(&self) -> Vec<f64> {
        let m = (self.dense_len - 1) as f64;
        (0..self.dense_len)
            .map(|j| self.t_end * j as f64 / m)
            .collect()
    }

    /// Point of the curve with start `phase` at time `t`; the angle grows
    /// linearly with time, so `t` outside `[0, t_end]` extends the spiral.
    pub fn point_at(&self, t: f64, phase: f64, clockwise: bool) -> Vector {
        let phi = self.phi_start + (self.phi_end - self.phi_start) * t / self.t_end;
        let r = self.a + self.b * phi;
        let angle = if clockwise { phase - phi } else { phase + phi };
        Vector::from([r * angle.cos(), r * angle.sin()])
    }

    /// Dense curve for a start phase; `clockwise` flips the angular direction.
    pub fn curve(&self, phase: f64, clockwise: bool) -> Vec<Vector> {
        self.dense_times()
            .into_iter()
            .map(|t| self.point_at(t, phase, clockwise))
            .collect()
    }

    /// Start phase of a curve from its first point (needs `a + b φ_start > 0`).
    pub fn phase_of(&self, first: &Vector, clockwise: bool) -> f64 {
        let angle = first[1].atan2(first[0]);
        if clockwise {
            angle + self.phi_start
        } else {
            angle - self.phi_start
        }
    }
}

/// Label stored for clockwise sequences; counterclockwise ones get 1.
pub const CLOCKWISE: u32 = 0;
pub const COUNTERCLOCKWISE: u32 = 1;

/// Training subsamples and the matching dense noise-free curves.
#[derive(Clone, Debug, PartialEq)]
pub struct SpiralSet {
    pub train: Dataset,
    pub test: Dataset,
}

impl SpiralSet {
    /// Positions of training sequence `i` on its dense curve.
    pub fn subsample_indices(&self, i: usize) -> Vec<usize> {
        let dense = self.test.sequences[i].times();
        let mut out = Vec::with_capacity(self.train.sequences[i].len());
        let mut j = 0;
        for &t in self.train.sequences[i].times() {
            while dense[j] != t {
                j += 1;
            }
            out.push(j);
        }
        out
    }
}

/// Generates the spiral datasets. Sequences `0..n` are clockwise and
/// `n..2n` counterclockwise; each has its own random start phase.
pub fn gen_spirals(spec: &SpiralSpec) -> Result<SpiralSet> {
    spec.validate()?;
    let rng = Rng::new(spec.seed);
    let mut phase_rng = rng.fork(1);
    let mut index_rng = rng.fork(2);
    let mut noise_rng = rng.fork(3);
    let times = spec.dense_times();
    let mut train = Dataset::default();
    let mut test = Dataset::default();
    for (label, clockwise) in [(CLOCKWISE, true), (COUNTERCLOCKWISE, false)] {
        for _ in 0..spec.n_per_direction {
            let phase = phase_rng.uniform(0.0, 2.0 * PI);
            let curve = spec.curve(phase, clockwise);
            let idx = index_rng.sorted_sample(spec.dense_len, spec.subsample_len);
            let sub_times: Vec<f64> = idx.iter().map(|&j| times[j]).collect();
            let sub_values: Vec<Vector> = idx
                .iter()
                .map(|&j| {
                    let (dx, dy) = (noise_rng.normal(), noise_rng.normal());
                    Vector::from([
                        curve[j][0] + spec.noise_std * dx,
                        curve[j][1] + spec.noise_std * dy,
                    ])
                })
                .collect();
            let noisy = TimedSequence::new(sub_times, sub_values)?;
            let dense = TimedSequence::new(times.clone(), curve)?;
            train.push(noisy.clone(), noisy, label);
            test.push(dense.clone(), dense, label);
        }
    }
    Ok(SpiralSet { train, test })
}

/// Sign of the summed cross products of successive displacements:
/// positive for counterclockwise motion.
pub fn chirality(points: &[Vector]) -> f64 {
    points
        .windows(3)
        .map(|w| {
            let (d1x, d1y) = (w[1][0] - w[0][0], w[1][1] - w[0][1]);
            let (d2x, d2y) = (w[2][0] - w[1][0], w[2][1] - w[1][1]);
            d1x * d2y - d1y * d2x
        })
        .sum::<f64>()
        .signum()
}
