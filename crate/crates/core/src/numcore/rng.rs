use rand::seq::index;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Matrix, Vector};
use crate::error::{Error, Result};

/// Seeded, platform-independent random source.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream derived from this generator's seed.
    pub fn fork(&self, stream: u64) -> Rng {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream.wrapping_add(1));
        Rng {
            seed: self.seed,
            inner,
        }
    }

    /// `len` independent standard-normal draws.
    pub fn gaussian(&mut self, len: usize) -> Result<Vector> {
        if len == 0 {
            return Err(Error::invalid("gaussian draw needs len > 0"));
        }
        Ok((0..len).map(|_| self.normal()).collect())
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.gen::<f64>()
    }

    pub fn uniform_vector(&mut self, len: usize, scale: f64) -> Vector {
        (0..len).map(|_| self.uniform(-scale, scale)).collect()
    }

    pub fn uniform_matrix(&mut self, rows: usize, cols: usize, scale: f64) -> Matrix {
        let data = (0..rows * cols)
            .map(|_| self.uniform(-scale, scale))
            .collect();
        Matrix::from_vec(rows, cols, data).expect("sized by construction")
    }

    pub fn gaussian_matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols).map(|_| self.normal()).collect();
        Matrix::from_vec(rows, cols, data).expect("sized by construction")
    }

    /// `amount` distinct indices from `0..length`, sorted ascending.
    pub fn sorted_sample(&mut self, length: usize, amount: usize) -> Vec<usize> {
        let mut picked = index::sample(&mut self.inner, length, amount).into_vec();
        picked.sort_unstable();
        picked
    }

    pub fn below(&mut self, bound: usize) -> usize {
        self.inner.gen_range(0..bound)
    }
}

/// Scale used for weight initialization: uniform in `[-s, s]`, `s = 1/sqrt(fan_in)`.
pub fn init_scale(fan_in: usize) -> f64 {
    1.0 / (fan_in.max(1) as f64).sqrt()
}
