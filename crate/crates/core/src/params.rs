//! Named parameter collections.
//!
//! Every trainable component exposes its tensors in a fixed declaration
//! order through [`ParamSet`]. Gradients are stored in a value of the same
//! type as the parameters, so flattening both with the same visitor lines
//! them up element for element.

use crate::error::{Error, Result};
use crate::numcore::{Matrix, Vector};

/// Read-only view of one named tensor.
#[derive(Clone, Copy, Debug)]
pub struct ParamView<'a> {
    pub name: &'a str,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
}

/// Location of one named tensor inside a flattened parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

pub trait ParamSet {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |p| n += p.data.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit("", &mut |p| out.extend_from_slice(p.data));
        out
    }

    fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        let expected = self.num_params();
        if flat.len() != expected {
            return Err(Error::shape(
                "assign_flat",
                format!("{expected} parameters"),
                format!("{} values", flat.len()),
            ));
        }
        let mut offset = 0;
        self.visit_mut("", &mut |_, data| {
            data.copy_from_slice(&flat[offset..offset + data.len()]);
            offset += data.len();
        });
        Ok(())
    }

    fn blocks(&self) -> Vec<ParamBlock> {
        let mut out = Vec::new();
        let mut offset = 0;
        self.visit("", &mut |p| {
            out.push(ParamBlock {
                name: p.name.to_string(),
                rows: p.rows,
                cols: p.cols,
                offset,
            });
            offset += p.data.len();
        });
        out
    }

    fn fill_params(&mut self, value: f64) {
        self.visit_mut("", &mut |_, data| data.iter_mut().for_each(|x| *x = value));
    }

    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut z = self.clone();
        z.fill_params(0.0);
        z
    }

    /// `self += alpha * other`, element by element in flattened order.
    fn add_scaled(&mut self, alpha: f64, other: &Self)
    where
        Self: Sized,
    {
        let flat = other.flatten();
        let mut offset = 0;
        self.visit_mut("", &mut |_, data| {
            for (d, g) in data.iter_mut().zip(&flat[offset..]) {
                *d += alpha * g;
            }
            offset += data.len();
        });
    }
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub fn visit_matrix(prefix: &str, name: &str, m: &Matrix, f: &mut dyn FnMut(ParamView<'_>)) {
    let full = join(prefix, name);
    f(ParamView {
        name: &full,
        rows: m.rows(),
        cols: m.cols(),
        data: m.data(),
    });
}

pub fn visit_vector(prefix: &str, name: &str, v: &Vector, f: &mut dyn FnMut(ParamView<'_>)) {
    let full = join(prefix, name);
    f(ParamView {
        name: &full,
        rows: v.len(),
        cols: 1,
        data: v.as_slice(),
    });
}

pub fn visit_matrix_mut(
    prefix: &str,
    name: &str,
    m: &mut Matrix,
    f: &mut dyn FnMut(&str, &mut [f64]),
) {
    f(&join(prefix, name), m.data_mut());
}

pub fn visit_vector_mut(
    prefix: &str,
    name: &str,
    v: &mut Vector,
    f: &mut dyn FnMut(&str, &mut [f64]),
) {
    f(&join(prefix, name), v.as_mut_slice());
}

/// Global L2 norm over every element of every tensor.
pub fn global_norm<P: ParamSet + ?Sized>(params: &P) -> f64 {
    let mut sq = 0.0;
    params.visit("", &mut |p| sq += p.data.iter().map(|x| x * x).sum::<f64>());
    sq.sqrt()
}
