use std::fmt;

use serde::{Deserialize, Serialize};

use super::Vector;
use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "Matrix::from_vec",
                format!("{rows}x{cols}"),
                format!("{} values", data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows. Panics on ragged input.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn shape_str(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }

    /// Checked matrix-vector product.
    pub fn matvec(&self, v: &[f64]) -> Result<Vector> {
        if self.cols != v.len() {
            return Err(Error::shape(
                "matvec",
                self.shape_str(),
                format!("vector[{}]", v.len()),
            ));
        }
        Ok(self.apply(v))
    }

    /// Matrix-vector product; the caller guarantees `v.len() == cols`.
    pub fn apply(&self, v: &[f64]) -> Vector {
        debug_assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `self^T v`; the caller guarantees `v.len() == rows`.
    pub fn apply_transpose(&self, v: &[f64]) -> Vector {
        debug_assert_eq!(self.rows, v.len());
        let mut out = Vector::zeros(self.cols);
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }

    /// `self += alpha * u v^T`
    pub fn add_outer(&mut self, alpha: f64, u: &[f64], v: &[f64]) {
        debug_assert_eq!((self.rows, self.cols), (u.len(), v.len()));
        for (i, &ui) in u.iter().enumerate() {
            let s = alpha * ui;
            if s == 0.0 {
                continue;
            }
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (r, &vj) in row.iter_mut().zip(v) {
                *r += s * vj;
            }
        }
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::shape("matmul", self.shape_str(), other.shape_str()));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| s * x).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::shape("add", self.shape_str(), other.shape_str()));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Power-iteration estimate of the dominant eigenvalue magnitude.
    ///
    /// When the one-step growth ratio settles, that ratio is returned. A
    /// dominant complex pair keeps the ratio oscillating; in that case the
    /// growth rate over the second half of the iterations is used instead.
    pub fn spectral_radius_est(&self, iters: usize) -> Result<f64> {
        if !self.is_square() {
            return Err(Error::shape(
                "spectral_radius_est",
                self.shape_str(),
                "square matrix",
            ));
        }
        if iters == 0 {
            return Err(Error::invalid("spectral_radius_est needs iters >= 1"));
        }
        let n = self.rows;
        if n == 0 {
            return Ok(0.0);
        }
        // Deterministic start with components in every direction.
        let mut v: Vector = (0..n)
            .map(|i| 1.0 + 0.1 * (i as f64 + 1.0).sqrt())
            .collect();
        let start_norm = v.norm();
        v = v.scale(1.0 / start_norm);
        let mut log_growth = Vec::with_capacity(iters);
        let mut ratios = Vec::with_capacity(iters);
        for _ in 0..iters {
            let w = self.apply(&v);
            let norm = w.norm();
            if norm == 0.0 {
                return Ok(0.0);
            }
            ratios.push(norm);
            log_growth.push(norm.ln());
            v = w.scale(1.0 / norm);
        }
        let last = ratios[ratios.len() - 1];
        if ratios.len() >= 2 {
            let prev = ratios[ratios.len() - 2];
            if (last - prev).abs() <= 1e-12 * last {
                return Ok(last);
            }
        } else {
            return Ok(last);
        }
        let half = &log_growth[log_growth.len() / 2..];
        Ok((half.iter().sum::<f64>() / half.len() as f64).exp())
    }

    /// Power-iteration estimate of the operator 2-norm (largest singular value).
    pub fn operator_norm_est(&self, iters: usize) -> f64 {
        if self.rows == 0 || self.cols == 0 {
            return 0.0;
        }
        let mut v: Vector = (0..self.cols)
            .map(|i| 1.0 + 0.1 * (i as f64 + 1.0).sqrt())
            .collect();
        let n0 = v.norm();
        v = v.scale(1.0 / n0);
        let mut sigma = 0.0;
        for _ in 0..iters.max(1) {
            let av = self.apply(&v);
            let atav = self.apply_transpose(&av);
            let norm = atav.norm();
            if norm == 0.0 {
                return 0.0;
            }
            sigma = av.norm();
            v = atav.scale(1.0 / norm);
        }
        sigma.max(self.apply(&v).norm())
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}
