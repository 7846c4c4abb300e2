//! Numerical integration of (learned) vector fields.
//!
//! Training goes through the fixed-step 3/8-rule solver, whose step
//! arithmetic is recorded by [`solve_with_tape`] and differentiated in
//! reverse. The adaptive Dormand-Prince solver is for inference only.

mod dopri5;
mod field;
mod rk38;

pub use dopri5::{dopri5_path, dopri5_solve};
pub use field::{DiffField, FnField, NeuralField, VectorField};
pub use rk38::{
    rk4_38_solve, solve_path, solve_path_backward, solve_path_taped, solve_with_tape, SolveTape,
    TapedPath,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Matrix, Vector};

/// Fixed-step integration interval. `t1 < t0` integrates backwards in time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedSpan {
    pub t0: f64,
    pub t1: f64,
    pub steps: usize,
}

impl FixedSpan {
    pub fn new(t0: f64, t1: f64, steps: usize) -> Self {
        FixedSpan { t0, t1, steps }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("fixed-step span needs steps >= 1"));
        }
        if !self.t0.is_finite() || !self.t1.is_finite() {
            return Err(Error::invalid("span endpoints must be finite"));
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.t0 == self.t1
    }

    pub fn step_size(&self) -> f64 {
        (self.t1 - self.t0) / self.steps as f64
    }

    /// Grid time `k`; the last grid point is exactly `t1`.
    pub fn time_at(&self, k: usize) -> f64 {
        if k == self.steps {
            self.t1
        } else {
            self.t0 + k as f64 * self.step_size()
        }
    }
}

/// Step-size controller constants for [`dopri5_solve`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DopriConfig {
    pub safety: f64,
    pub max_growth: f64,
    pub min_shrink: f64,
    /// First trial step as a fraction of the span; `None` estimates it
    /// from the initial slope.
    pub initial_step_fraction: Option<f64>,
    /// Steps smaller than this fraction of the span abort with a stiffness error.
    pub min_step_fraction: f64,
}

impl Default for DopriConfig {
    fn default() -> Self {
        DopriConfig {
            safety: 0.9,
            max_growth: 5.0,
            min_shrink: 0.2,
            initial_step_fraction: Some(0.01),
            min_step_fraction: 1e-10,
        }
    }
}

/// Adaptive integration interval and tolerances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptiveSpan {
    pub t0: f64,
    pub t1: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub config: DopriConfig,
}

impl AdaptiveSpan {
    pub fn new(t0: f64, t1: f64, rtol: f64, atol: f64) -> Self {
        AdaptiveSpan {
            t0,
            t1,
            rtol,
            atol,
            max_steps: 100_000,
            config: DopriConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::invalid("rtol and atol must be positive"));
        }
        if self.max_steps == 0 {
            return Err(Error::invalid("max_steps must be >= 1"));
        }
        if !self.t0.is_finite() || !self.t1.is_finite() {
            return Err(Error::invalid("span endpoints must be finite"));
        }
        Ok(())
    }
}

/// States visited by a solve, starting with the initial condition.
#[derive(Clone, Debug, Default)]
pub struct SolveTrace {
    pub states: Vec<(f64, Vector)>,
    pub accepted: usize,
    pub rejected: usize,
    /// Number of vector-field evaluations.
    pub evaluations: usize,
    /// Normalized local error estimate of each accepted adaptive step.
    pub error_estimates: Vec<f64>,
}

impl SolveTrace {
    pub(crate) fn start(t0: f64, h0: Vector) -> Self {
        SolveTrace {
            states: vec![(t0, h0)],
            ..Default::default()
        }
    }

    pub(crate) fn push_accepted(&mut self, t: f64, h: Vector, evaluations: usize) {
        self.states.push((t, h));
        self.accepted += 1;
        self.evaluations += evaluations;
    }

    pub fn final_state(&self) -> &Vector {
        &self.states[self.states.len() - 1].1
    }

    pub fn final_time(&self) -> f64 {
        self.states[self.states.len() - 1].0
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|(t, _)| *t).collect()
    }
}

/// Linear autonomous field `dh/dt = A h`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearField {
    pub a: Matrix,
}

impl VectorField for LinearField {
    fn dim(&self) -> usize {
        self.a.rows()
    }

    fn eval(&self, _t: f64, h: &[f64]) -> Vector {
        self.a.apply(h)
    }
}

impl DiffField for LinearField {
    type Cache = Vector;
    type Grad = Matrix;

    fn eval_taped(&self, t: f64, h: &[f64]) -> (Vector, Vector) {
        (self.eval(t, h), Vector::from(h))
    }

    fn vjp(&self, input: &Vector, cot: &[f64], grad: &mut Matrix) -> Vector {
        grad.add_outer(1.0, cot, input);
        self.a.apply_transpose(cot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;
    use crate::params::ParamSet;
    use std::f64::consts::{E, PI};

    fn exp_field() -> FnField<impl Fn(f64, &[f64]) -> Vector> {
        FnField::new(1, |_t, y: &[f64]| Vector::from(y))
    }

    fn zero_field(n: usize) -> FnField<impl Fn(f64, &[f64]) -> Vector> {
        FnField::new(n, move |_t, _y: &[f64]| Vector::zeros(n))
    }

    #[test]
    fn rk38_zero_field_is_constant() {
        let h0 = Vector::from([1.5, -2.0]);
        let trace = rk4_38_solve(&zero_field(2), &h0, &FixedSpan::new(0.0, 3.0, 7)).unwrap();
        assert_eq!(trace.states.len(), 8);
        assert!(trace.states.iter().all(|(_, h)| *h == h0));
    }

    #[test]
    fn rk38_exponential_growth() {
        let trace = rk4_38_solve(
            &exp_field(),
            &Vector::from([1.0]),
            &FixedSpan::new(0.0, 1.0, 100),
        )
        .unwrap();
        assert!((trace.final_state()[0] - E).abs() < 1e-8);
        assert_eq!(trace.final_time(), 1.0);
        assert_eq!(trace.evaluations, 400);
    }

    #[test]
    fn rk38_backward_extrapolation() {
        let decay = FnField::new(1, |_t, y: &[f64]| Vector::from([-y[0]]));
        let trace = rk4_38_solve(
            &decay,
            &Vector::from([(-1.0f64).exp()]),
            &FixedSpan::new(1.0, 0.0, 100),
        )
        .unwrap();
        assert!((trace.final_state()[0] - 1.0).abs() < 1e-7);
        let times = trace.times();
        assert!(times.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn rk38_zero_length_span_is_identity() {
        let h0 = Vector::from([0.3]);
        let trace = rk4_38_solve(&exp_field(), &h0, &FixedSpan::new(2.0, 2.0, 4)).unwrap();
        assert_eq!(trace.states.len(), 1);
        assert_eq!(trace.final_state(), &h0);
        assert_eq!(trace.evaluations, 0);
    }

    #[test]
    fn rk38_fourth_order_convergence() {
        let steps = [10usize, 20, 40, 80, 160];
        let pts: Vec<(f64, f64)> = steps
            .iter()
            .map(|&n| {
                let y = rk4_38_solve(
                    &exp_field(),
                    &Vector::from([1.0]),
                    &FixedSpan::new(0.0, 1.0, n),
                )
                .unwrap();
                ((1.0 / n as f64).ln(), (y.final_state()[0] - E).abs().ln())
            })
            .collect();
        let slope = crate::train::fit_slope(&pts).unwrap();
        assert!((3.8..=4.2).contains(&slope), "slope {slope}");
    }

    #[test]
    fn rk38_divergence_reports_step() {
        let blowup = FnField::new(1, |_t, y: &[f64]| Vector::from([y[0] * y[0]]));
        let err = rk4_38_solve(
            &blowup,
            &Vector::from([1.0]),
            &FixedSpan::new(0.0, 10.0, 50),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }

    #[test]
    fn rk38_rejects_bad_input() {
        assert!(rk4_38_solve(
            &exp_field(),
            &Vector::from([1.0]),
            &FixedSpan::new(0.0, 1.0, 0)
        )
        .is_err());
        assert!(rk4_38_solve(
            &exp_field(),
            &Vector::from([1.0, 2.0]),
            &FixedSpan::new(0.0, 1.0, 3)
        )
        .is_err());
    }

    #[test]
    fn forward_then_backward_round_trip() {
        let mut rng = Rng::new(9);
        for _ in 0..5 {
            let field = LinearField {
                a: rng.uniform_matrix(3, 3, 0.8),
            };
            let h0 = rng.gaussian(3).unwrap();
            let fwd = rk4_38_solve(&field, &h0, &FixedSpan::new(0.5, 2.0, 40)).unwrap();
            let back =
                rk4_38_solve(&field, fwd.final_state(), &FixedSpan::new(2.0, 0.5, 40)).unwrap();
            let rel = back.final_state().sub(&h0).norm() / h0.norm();
            assert!(rel < 1e-6, "{rel}");
        }
    }

    #[test]
    fn dopri5_exponential_is_cheaper_than_fixed_step() {
        let span = AdaptiveSpan::new(0.0, 1.0, 1e-8, 1e-8);
        let trace = dopri5_solve(&exp_field(), &Vector::from([1.0]), &span).unwrap();
        let err = (trace.final_state()[0] - E).abs();
        assert!(err < 1e-6, "{err}");
        let fixed_evals = (1..)
            .map(|n| {
                let y = rk4_38_solve(
                    &exp_field(),
                    &Vector::from([1.0]),
                    &FixedSpan::new(0.0, 1.0, n),
                )
                .unwrap();
                (n, (y.final_state()[0] - E).abs())
            })
            .find(|&(_, e)| e <= err)
            .map(|(n, _)| 4 * n)
            .unwrap();
        // At equal accuracy the 5(4) pair needs well under half the work;
        // the margin widens as the tolerance tightens.
        assert!(
            2 * trace.evaluations <= fixed_evals,
            "adaptive {} vs fixed {fixed_evals}",
            trace.evaluations
        );
        assert!(trace.error_estimates.iter().all(|&e| e <= 1.0));
    }

    #[test]
    fn dopri5_zero_field_single_step() {
        let h0 = Vector::from([1.0, 2.0]);
        let trace = dopri5_solve(
            &zero_field(2),
            &h0,
            &AdaptiveSpan::new(0.0, 5.0, 1e-6, 1e-6),
        )
        .unwrap();
        assert_eq!(trace.accepted, 1);
        assert_eq!(trace.rejected, 0);
        assert_eq!(trace.final_time(), 5.0);
        assert_eq!(trace.final_state(), &h0);
    }

    #[test]
    fn dopri5_rotation_returns_after_one_period() {
        let rot = FnField::new(2, |_t, y: &[f64]| Vector::from([-y[1], y[0]]));
        let h0 = Vector::from([1.0, 0.5]);
        let trace = dopri5_solve(&rot, &h0, &AdaptiveSpan::new(0.0, 2.0 * PI, 1e-9, 1e-9)).unwrap();
        assert!(trace.final_state().sub(&h0).norm() < 1e-5);
        let back = dopri5_solve(&rot, &h0, &AdaptiveSpan::new(0.0, -2.0 * PI, 1e-9, 1e-9)).unwrap();
        assert!(back.final_state().sub(&h0).norm() < 1e-5);
    }

    #[test]
    fn dopri5_step_budget_and_stiffness_errors() {
        let mut span = AdaptiveSpan::new(0.0, 10.0, 1e-10, 1e-10);
        span.max_steps = 3;
        let err = dopri5_solve(&exp_field(), &Vector::from([1.0]), &span).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { max_steps: 3, .. }));

        // Finite-time blow-up at t = 1 drives the step size to zero.
        let blowup = FnField::new(1, |_t, y: &[f64]| Vector::from([y[0] * y[0]]));
        let err = dopri5_solve(
            &blowup,
            &Vector::from([1.0]),
            &AdaptiveSpan::new(0.0, 2.0, 1e-8, 1e-8),
        )
        .unwrap_err();
        assert!(
            matches!(err, Error::Stiffness { .. } | Error::NonConvergence { .. }),
            "{err}"
        );
    }

    #[test]
    fn tape_of_zero_field_is_identity() {
        let field = NeuralField::zeros(3, &[4], false);
        let h0 = Vector::from([0.1, 0.2, 0.3]);
        let (trace, tape) = solve_with_tape(&field, &h0, &FixedSpan::new(0.0, 1.0, 5)).unwrap();
        assert_eq!(trace.final_state(), &h0);
        let cot = Vector::from([1.0, -2.0, 0.5]);
        let mut grad = field.zeros_like();
        let back = tape.backward(&field, &cot, &mut grad);
        assert_eq!(back, cot);
        // Hidden activations are tanh(0) = 0 and W_out = 0, so only the
        // output bias sees a gradient.
        assert!(grad.net.layers[0].w.data().iter().all(|&g| g == 0.0));
        assert!(grad.net.layers[0].b.iter().all(|&g| g == 0.0));
        assert!(grad.net.layers[1].w.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn tape_matches_scalar_finite_difference() {
        let solve = |theta: f64| {
            let field = LinearField {
                a: Matrix::from_rows(&[&[theta]]),
            };
            rk4_38_solve(&field, &Vector::from([1.0]), &FixedSpan::new(0.0, 1.0, 20))
                .unwrap()
                .final_state()[0]
        };
        let theta = 0.7;
        let field = LinearField {
            a: Matrix::from_rows(&[&[theta]]),
        };
        let (_, tape) =
            solve_with_tape(&field, &Vector::from([1.0]), &FixedSpan::new(0.0, 1.0, 20)).unwrap();
        let mut grad = Matrix::zeros(1, 1);
        tape.backward(&field, &Vector::from([1.0]), &mut grad);
        let h = 1e-5;
        let fd = (solve(theta + h) - solve(theta - h)) / (2.0 * h);
        assert!((grad[(0, 0)] - fd).abs() / fd.abs() < 1e-6);
    }

    #[test]
    fn single_step_jacobian_is_quartic_taylor_polynomial() {
        let mut rng = Rng::new(4);
        let a = rng.uniform_matrix(3, 3, 1.0);
        let dt = 0.3;
        let field = LinearField { a: a.clone() };
        let (_, tape) =
            solve_with_tape(&field, &Vector::zeros(3), &FixedSpan::new(0.0, dt, 1)).unwrap();

        // Oracle: sum_{k<=4} (dt A)^k / k!
        let z = a.scale(dt);
        let mut poly = Matrix::identity(3);
        let mut term = Matrix::identity(3);
        for k in 1..=4 {
            term = term.matmul(&z).unwrap().scale(1.0 / k as f64);
            poly = poly.add(&term).unwrap();
        }
        for i in 0..3 {
            let mut g = Matrix::zeros(3, 3);
            let row = tape.backward(&field, &Vector::basis(3, i), &mut g);
            for j in 0..3 {
                assert!((row[j] - poly[(i, j)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn neural_field_tape_matches_finite_differences() {
        for seed in 0..4 {
            let mut rng = Rng::new(100 + seed);
            let time_input = seed % 2 == 1;
            let field = NeuralField::init(3, &[5], time_input, &mut rng);
            let h0 = rng.gaussian(3).unwrap();
            let w = rng.gaussian(3).unwrap();
            let span = FixedSpan::new(0.2, -0.9, 6);
            let loss = |f: &NeuralField, h0: &Vector| {
                rk4_38_solve(f, h0, &span).unwrap().final_state().dot(&w)
            };

            let (_, tape) = solve_with_tape(&field, &h0, &span).unwrap();
            let mut grad = field.zeros_like();
            let dh0 = tape.backward(&field, &w, &mut grad);

            let flat = field.flatten();
            let g = grad.flatten();
            let step = 1e-5;
            for i in 0..flat.len() {
                let mut p = field.clone();
                let mut v = flat.clone();
                v[i] += step;
                p.assign_flat(&v).unwrap();
                let up = loss(&p, &h0);
                v[i] -= 2.0 * step;
                p.assign_flat(&v).unwrap();
                let down = loss(&p, &h0);
                let fd = (up - down) / (2.0 * step);
                let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-3);
                assert!(rel < 1e-5, "param {i}: {fd} vs {}", g[i]);
            }
            for i in 0..3 {
                let mut hp = h0.clone();
                hp[i] += step;
                let mut hm = h0.clone();
                hm[i] -= step;
                let fd = (loss(&field, &hp) - loss(&field, &hm)) / (2.0 * step);
                assert!((fd - dh0[i]).abs() / fd.abs().max(1e-3) < 1e-5);
            }
        }
    }

    #[test]
    fn path_solver_matches_single_span() {
        let mut rng = Rng::new(12);
        let field = NeuralField::init(2, &[4], false, &mut rng);
        let y0 = rng.gaussian(2).unwrap();
        let states = solve_path(&field, &y0, 0.0, &[0.0, 0.5, 1.0], 4).unwrap();
        assert_eq!(states[0], y0);
        let direct = rk4_38_solve(&field, &y0, &FixedSpan::new(0.0, 1.0, 8)).unwrap();
        assert!(states[2].sub(direct.final_state()).norm() < 1e-14);
    }
}
