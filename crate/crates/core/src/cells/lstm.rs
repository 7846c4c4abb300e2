use serde::{Deserialize, Serialize};

use super::{Cell, CellState};
use crate::error::Result;
use crate::numcore::{init_scale, sigmoid_scalar, Matrix, Rng, Vector};
use crate::params::{
    visit_matrix, visit_matrix_mut, visit_vector, visit_vector_mut, ParamSet, ParamView,
};

/// LSTM cell with input (`in`), forget (`f`), output (`o`) gates and the
/// tanh candidate (`c`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    pub w_xin: Matrix,
    pub w_xf: Matrix,
    pub w_xo: Matrix,
    pub w_xc: Matrix,
    pub w_hin: Matrix,
    pub w_hf: Matrix,
    pub w_ho: Matrix,
    pub w_hc: Matrix,
    pub b_in: Vector,
    pub b_f: Vector,
    pub b_o: Vector,
    pub b_c: Vector,
}

/// Gate activations of one step.
#[derive(Clone, Debug)]
pub struct LstmCache {
    x: Vector,
    h_in: Vector,
    c_prev: Vector,
    pub input_gate: Vector,
    pub forget_gate: Vector,
    pub output_gate: Vector,
    pub candidate: Vector,
    tanh_c: Vector,
}

impl LstmCell {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        let wx = || Matrix::zeros(hidden, input_dim);
        let wh = || Matrix::zeros(hidden, hidden);
        let b = || Vector::zeros(hidden);
        LstmCell {
            w_xin: wx(),
            w_xf: wx(),
            w_xo: wx(),
            w_xc: wx(),
            w_hin: wh(),
            w_hf: wh(),
            w_ho: wh(),
            w_hc: wh(),
            b_in: b(),
            b_f: b(),
            b_o: b(),
            b_c: b(),
        }
    }

    pub fn init(input_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        let mut cell = Self::zeros(input_dim, hidden);
        let s = init_scale(input_dim + hidden);
        cell.visit_mut("", &mut |_, data| {
            data.iter_mut().for_each(|v| *v = rng.uniform(-s, s));
        });
        cell
    }

    /// Forget gate pinned open and input gate pinned shut: `C_i = C_{i-1}`.
    pub fn carousel(input_dim: usize, hidden: usize, saturation: f64) -> Self {
        let mut cell = Self::zeros(input_dim, hidden);
        cell.b_f.fill(saturation);
        cell.b_in.fill(-saturation);
        cell
    }

    fn gate(wx: &Matrix, wh: &Matrix, b: &Vector, x: &[f64], h: &[f64]) -> Vector {
        let mut z = wx.apply(x);
        z.add_assign(&wh.apply(h));
        z.add_assign(b);
        z
    }

    /// One update `(C_i, h_i) = LSTMCell(C_{i-1}, h, x_i)`, with shape checks.
    pub fn forward(&self, state: &CellState, x: &Vector) -> Result<CellState> {
        state.h.check_len("lstm_cell h", self.hidden_dim())?;
        state.c.check_len("lstm_cell c", self.hidden_dim())?;
        x.check_len("lstm_cell x", self.input_dim())?;
        Ok(self.step(&state.c, &state.h, x).0)
    }
}

impl Cell for LstmCell {
    type Cache = LstmCache;

    fn hidden_dim(&self) -> usize {
        self.w_hin.rows()
    }

    fn input_dim(&self) -> usize {
        self.w_xin.cols()
    }

    fn step(&self, c_prev: &Vector, h_in: &Vector, x: &Vector) -> (CellState, LstmCache) {
        let i = Self::gate(&self.w_xin, &self.w_hin, &self.b_in, x, h_in).map(sigmoid_scalar);
        let f = Self::gate(&self.w_xf, &self.w_hf, &self.b_f, x, h_in).map(sigmoid_scalar);
        let o = Self::gate(&self.w_xo, &self.w_ho, &self.b_o, x, h_in).map(sigmoid_scalar);
        let g = Self::gate(&self.w_xc, &self.w_hc, &self.b_c, x, h_in).map(f64::tanh);
        let c = f.hadamard(c_prev).add(&i.hadamard(&g));
        let tanh_c = c.map(f64::tanh);
        let h = o.hadamard(&tanh_c);
        (
            CellState { h, c },
            LstmCache {
                x: x.clone(),
                h_in: h_in.clone(),
                c_prev: c_prev.clone(),
                input_gate: i,
                forget_gate: f,
                output_gate: o,
                candidate: g,
                tanh_c,
            },
        )
    }

    fn step_backward(
        &self,
        cache: &LstmCache,
        dh: &Vector,
        dc: &Vector,
        grad: &mut Self,
    ) -> (Vector, Vector) {
        let n = dh.len();
        let (i, f, o, g) = (
            &cache.input_gate,
            &cache.forget_gate,
            &cache.output_gate,
            &cache.candidate,
        );
        let mut dz_i = Vector::zeros(n);
        let mut dz_f = Vector::zeros(n);
        let mut dz_o = Vector::zeros(n);
        let mut dz_g = Vector::zeros(n);
        let mut dc_prev = Vector::zeros(n);
        for k in 0..n {
            let tc = cache.tanh_c[k];
            let do_k = dh[k] * tc;
            let dc_k = dc[k] + dh[k] * o[k] * (1.0 - tc * tc);
            dc_prev[k] = dc_k * f[k];
            dz_i[k] = dc_k * g[k] * i[k] * (1.0 - i[k]);
            dz_f[k] = dc_k * cache.c_prev[k] * f[k] * (1.0 - f[k]);
            dz_o[k] = do_k * o[k] * (1.0 - o[k]);
            dz_g[k] = dc_k * i[k] * (1.0 - g[k] * g[k]);
        }
        let x = &cache.x;
        let h = &cache.h_in;
        grad.w_xin.add_outer(1.0, &dz_i, x);
        grad.w_xf.add_outer(1.0, &dz_f, x);
        grad.w_xo.add_outer(1.0, &dz_o, x);
        grad.w_xc.add_outer(1.0, &dz_g, x);
        grad.w_hin.add_outer(1.0, &dz_i, h);
        grad.w_hf.add_outer(1.0, &dz_f, h);
        grad.w_ho.add_outer(1.0, &dz_o, h);
        grad.w_hc.add_outer(1.0, &dz_g, h);
        grad.b_in.add_assign(&dz_i);
        grad.b_f.add_assign(&dz_f);
        grad.b_o.add_assign(&dz_o);
        grad.b_c.add_assign(&dz_g);

        let mut dh_in = self.w_hin.apply_transpose(&dz_i);
        dh_in.add_assign(&self.w_hf.apply_transpose(&dz_f));
        dh_in.add_assign(&self.w_ho.apply_transpose(&dz_o));
        dh_in.add_assign(&self.w_hc.apply_transpose(&dz_g));
        (dh_in, dc_prev)
    }
}

impl ParamSet for LstmCell {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        visit_matrix(prefix, "w_xin", &self.w_xin, f);
        visit_matrix(prefix, "w_xf", &self.w_xf, f);
        visit_matrix(prefix, "w_xo", &self.w_xo, f);
        visit_matrix(prefix, "w_xc", &self.w_xc, f);
        visit_matrix(prefix, "w_hin", &self.w_hin, f);
        visit_matrix(prefix, "w_hf", &self.w_hf, f);
        visit_matrix(prefix, "w_ho", &self.w_ho, f);
        visit_matrix(prefix, "w_hc", &self.w_hc, f);
        visit_vector(prefix, "b_in", &self.b_in, f);
        visit_vector(prefix, "b_f", &self.b_f, f);
        visit_vector(prefix, "b_o", &self.b_o, f);
        visit_vector(prefix, "b_c", &self.b_c, f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        visit_matrix_mut(prefix, "w_xin", &mut self.w_xin, f);
        visit_matrix_mut(prefix, "w_xf", &mut self.w_xf, f);
        visit_matrix_mut(prefix, "w_xo", &mut self.w_xo, f);
        visit_matrix_mut(prefix, "w_xc", &mut self.w_xc, f);
        visit_matrix_mut(prefix, "w_hin", &mut self.w_hin, f);
        visit_matrix_mut(prefix, "w_hf", &mut self.w_hf, f);
        visit_matrix_mut(prefix, "w_ho", &mut self.w_ho, f);
        visit_matrix_mut(prefix, "w_hc", &mut self.w_hc, f);
        visit_vector_mut(prefix, "b_in", &mut self.b_in, f);
        visit_vector_mut(prefix, "b_f", &mut self.b_f, f);
        visit_vector_mut(prefix, "b_o", &mut self.b_o, f);
        visit_vector_mut(prefix, "b_c", &mut self.b_c, f);
    }
}
