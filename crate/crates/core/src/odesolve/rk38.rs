//! Fixed-step fourth-order Runge-Kutta, 3/8 rule.
//!
//! Tableau:
//!
//! ```text
//!   0  |
//!  1/3 |  1/3
//!  2/3 | -1/3   1
//!   1  |   1   -1    1
//! -----+----------------------
//!      |  1/8  3/8  3/8  1/8
//! ```

use super::{DiffField, FixedSpan, SolveTrace, VectorField};
use crate::error::{Error, Result};
use crate::numcore::Vector;

fn step<F: VectorField + ?Sized>(f: &F, t: f64, y: &Vector, dt: f64) -> Vector {
    let k1 = f.eval(t, y);
    let mut u = y.clone();
    u.axpy(dt / 3.0, &k1);
    let k2 = f.eval(t + dt / 3.0, &u);
    let mut u = y.clone();
    u.axpy(-dt / 3.0, &k1);
    u.axpy(dt, &k2);
    let k3 = f.eval(t + 2.0 * dt / 3.0, &u);
    let mut u = y.clone();
    u.axpy(dt, &k1);
    u.axpy(-dt, &k2);
    u.axpy(dt, &k3);
    let k4 = f.eval(t + dt, &u);
    let mut out = y.clone();
    out.axpy(dt / 8.0, &k1);
    out.axpy(3.0 * dt / 8.0, &k2);
    out.axpy(3.0 * dt / 8.0, &k3);
    out.axpy(dt / 8.0, &k4);
    out
}

/// Stage caches of one recorded step.
#[derive(Clone, Debug)]
struct StepRecord<C> {
    dt: f64,
    stages: [C; 4],
}

fn step_taped<F: DiffField + ?Sized>(
    f: &F,
    t: f64,
    y: &Vector,
    dt: f64,
) -> (Vector, StepRecord<F::Cache>) {
    let (k1, c1) = f.eval_taped(t, y);
    let mut u = y.clone();
    u.axpy(dt / 3.0, &k1);
    let (k2, c2) = f.eval_taped(t + dt / 3.0, &u);
    let mut u = y.clone();
    u.axpy(-dt / 3.0, &k1);
    u.axpy(dt, &k2);
    let (k3, c3) = f.eval_taped(t + 2.0 * dt / 3.0, &u);
    let mut u = y.clone();
    u.axpy(dt, &k1);
    u.axpy(-dt, &k2);
    u.axpy(dt, &k3);
    let (k4, c4) = f.eval_taped(t + dt, &u);
    let mut out = y.clone();
    out.axpy(dt / 8.0, &k1);
    out.axpy(3.0 * dt / 8.0, &k2);
    out.axpy(3.0 * dt / 8.0, &k3);
    out.axpy(dt / 8.0, &k4);
    (
        out,
        StepRecord {
            dt,
            stages: [c1, c2, c3, c4],
        },
    )
}

fn check_start<F: VectorField + ?Sized>(f: &F, h0: &Vector, span: &FixedSpan) -> Result<()> {
    h0.check_len("rk4_38 initial state", f.dim())?;
    span.validate()
}

/// Integrates `f` over `span` with `span.steps` uniform 3/8-rule steps.
pub fn rk4_38_solve<F: VectorField + ?Sized>(
    f: &F,
    h0: &Vector,
    span: &FixedSpan,
) -> Result<SolveTrace> {
    check_start(f, h0, span)?;
    let mut trace = SolveTrace::start(span.t0, h0.clone());
    if span.is_empty() {
        return Ok(trace);
    }
    let dt = span.step_size();
    let mut y = h0.clone();
    for k in 0..span.steps {
        let t = span.time_at(k);
        y = step(f, t, &y, dt);
        let t_next = span.time_at(k + 1);
        if !y.is_finite() {
            return Err(Error::Divergence { step: k, t: t_next });
        }
        trace.push_accepted(t_next, y.clone(), 4);
    }
    Ok(trace)
}

/// Recorded fixed-step solve: maps an output cotangent back onto the
/// initial state and the field parameters.
#[derive(Clone, Debug)]
pub struct SolveTape<C> {
    steps: Vec<StepRecord<C>>,
}

impl<C> SolveTape<C> {
    pub fn empty() -> Self {
        SolveTape { steps: Vec::new() }
    }

    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    /// Pulls `cot = dL/dh(t1)` back to `dL/dh(t0)`, accumulating `dL/dtheta`.
    pub fn backward<F>(&self, f: &F, cot: &Vector, grad: &mut F::Grad) -> Vector
    where
        F: DiffField<Cache = C> + ?Sized,
    {
        let mut dy = cot.clone();
        for rec in self.steps.iter().rev() {
            dy = step_backward(f, rec, &dy, grad);
        }
        dy
    }
}

fn step_backward<F: DiffField + ?Sized>(
    f: &F,
    rec: &StepRecord<F::Cache>,
    dout: &Vector,
    grad: &mut F::Grad,
) -> Vector {
    let dt = rec.dt;
    let mut dy = dout.clone();
    let mut dk1 = dout.scale(dt / 8.0);
    let mut dk2 = dout.scale(3.0 * dt / 8.0);
    let mut dk3 = dout.scale(3.0 * dt / 8.0);
    let dk4 = dout.scale(dt / 8.0);

    // u4 = y + dt (k1 - k2 + k3)
    let du4 = f.vjp(&rec.stages[3], &dk4, grad);
    dy.add_assign(&du4);
    dk1.axpy(dt, &du4);
    dk2.axpy(-dt, &du4);
    dk3.axpy(dt, &du4);
    // u3 = y + dt (-k1/3 + k2)
    let du3 = f.vjp(&rec.stages[2], &dk3, grad);
    dy.add_assign(&du3);
    dk1.axpy(-dt / 3.0, &du3);
    dk2.axpy(dt, &du3);
    // u2 = y + dt k1 / 3
    let du2 = f.vjp(&rec.stages[1], &dk2, grad);
    dy.add_assign(&du2);
    dk1.axpy(dt / 3.0, &du2);
    // u1 = y
    let du1 = f.vjp(&rec.stages[0], &dk1, grad);
    dy.add_assign(&du1);
    dy
}

/// Fixed-step solve that also records everything needed for the reverse pass.
pub fn solve_with_tape<F: DiffField + ?Sized>(
    f: &F,
    h0: &Vector,
    span: &FixedSpan,
) -> Result<(SolveTrace, SolveTape<F::Cache>)> {
    check_start(f, h0, span)?;
    let mut trace = SolveTrace::start(span.t0, h0.clone());
    let mut tape = SolveTape::empty();
    if span.is_empty() {
        return Ok((trace, tape));
    }
    let dt = span.step_size();
    let mut y = h0.clone();
    tape.steps.reserve(span.steps);
    for k in 0..span.steps {
        let (next, rec) = step_taped(f, span.time_at(k), &y, dt);
        let t_next = span.time_at(k + 1);
        if !next.is_finite() {
            return Err(Error::Divergence { step: k, t: t_next });
        }
        tape.steps.push(rec);
        trace.push_accepted(t_next, next.clone(), 4);
        y = next;
    }
    Ok((trace, tape))
}

/// States at the requested times with one tape per gap.
pub type TapedPath<C> = (Vec<Vector>, Vec<SolveTape<C>>);

/// Solves through an ordered list of output times starting from `y0` at
/// `t_start`, using `steps_per_gap` uniform steps between consecutive times.
///
/// Returns the state at every requested time plus the per-gap tapes.
pub fn solve_path_taped<F: DiffField + ?Sized>(
    f: &F,
    y0: &Vector,
    t_start: f64,
    times: &[f64],
    steps_per_gap: usize,
) -> Result<TapedPath<F::Cache>> {
    let mut states = Vec::with_capacity(times.len());
    let mut tapes = Vec::with_capacity(times.len());
    let mut y = y0.clone();
    let mut t_prev = t_start;
    let mut steps_done = 0;
    for &t in times {
        let span = FixedSpan::new(t_prev, t, steps_per_gap);
        let (trace, tape) =
            solve_with_tape(f, &y, &span).map_err(|e| offset_step(e, steps_done))?;
        steps_done += tape.num_steps();
        y = trace.final_state().clone();
        states.push(y.clone());
        tapes.push(tape);
        t_prev = t;
    }
    Ok((states, tapes))
}

/// Reverse pass for [`solve_path_taped`]; `cots[i]` is the cotangent on the
/// state at `times[i]`. Returns the cotangent on `y0`.
pub fn solve_path_backward<F: DiffField + ?Sized>(
    f: &F,
    tapes: &[SolveTape<F::Cache>],
    cots: &[Vector],
    grad: &mut F::Grad,
) -> Vector {
    debug_assert_eq!(tapes.len(), cots.len());
    let mut dy = Vector::zeros(f.dim());
    for (tape, cot) in tapes.iter().zip(cots).rev() {
        dy.add_assign(cot);
        dy = tape.backward(f, &dy, grad);
    }
    dy
}

/// Untaped counterpart of [`solve_path_taped`].
pub fn solve_path<F: VectorField + ?Sized>(
    f: &F,
    y0: &Vector,
    t_start: f64,
    times: &[f64],
    steps_per_gap: usize,
) -> Result<Vec<Vector>> {
    let mut states = Vec::with_capacity(times.len());
    let mut y = y0.clone();
    let mut t_prev = t_start;
    let mut steps_done = 0;
    for &t in times {
        let span = FixedSpan::new(t_prev, t, steps_per_gap);
        let trace = rk4_38_solve(f, &y, &span).map_err(|e| offset_step(e, steps_done))?;
        steps_done += trace.accepted;
        y = trace.final_state().clone();
        states.push(y.clone());
        t_prev = t;
    }
    Ok(states)
}

pub(crate) fn offset_step(e: Error, offset: usize) -> Error {
    match e {
        Error::Divergence { step, t } => Error::Divergence {
            step: step + offset,
            t,
        },
        other => other,
    }
}
