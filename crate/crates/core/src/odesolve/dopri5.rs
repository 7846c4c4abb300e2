//! Adaptive Dormand-Prince 5(4) with first-same-as-last stage reuse.

use super::{AdaptiveSpan, SolveTrace, VectorField};
use crate::error::{Error, Result};
use crate::numcore::Vector;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Fifth-order weights minus embedded fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Error estimator order + 1.
const EXPONENT: f64 = 1.0 / 5.0;

fn combine(y: &Vector, dt: f64, terms: &[(f64, &Vector)]) -> Vector {
    let mut out = y.clone();
    for &(c, k) in terms {
        if c != 0.0 {
            out.axpy(dt * c, k);
        }
    }
    out
}

struct Attempt {
    y_new: Vector,
    k7: Vector,
    err: f64,
}

fn attempt<F: VectorField + ?Sized>(
    f: &F,
    t: f64,
    y: &Vector,
    k1: &Vector,
    dt: f64,
    span: &AdaptiveSpan,
) -> Attempt {
    let k2 = f.eval(t + C2 * dt, &combine(y, dt, &[(A21, k1)]));
    let k3 = f.eval(t + C3 * dt, &combine(y, dt, &[(A31, k1), (A32, &k2)]));
    let k4 = f.eval(
        t + C4 * dt,
        &combine(y, dt, &[(A41, k1), (A42, &k2), (A43, &k3)]),
    );
    let k5 = f.eval(
        t + C5 * dt,
        &combine(y, dt, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    );
    let k6 = f.eval(
        t + dt,
        &combine(
            y,
            dt,
            &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        ),
    );
    let y_new = combine(
        y,
        dt,
        &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
    );
    let k7 = f.eval(t + dt, &y_new);

    let n = y.len().max(1) as f64;
    let mut sq = 0.0;
    for i in 0..y.len() {
        let e = dt * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let scale = span.atol + span.rtol * y[i].abs().max(y_new[i].abs());
        sq += (e / scale).powi(2);
    }
    let mut err = (sq / n).sqrt();
    if !y_new.is_finite() || !k7.is_finite() {
        err = f64::INFINITY;
    }
    Attempt { y_new, k7, err }
}

fn rms_scaled(v: &[f64], y: &[f64], span: &AdaptiveSpan) -> f64 {
    let n = v.len().max(1) as f64;
    (v.iter()
        .zip(y)
        .map(|(a, b)| (a / (span.atol + span.rtol * b.abs())).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
}

/// Starting step from the size of the state, its slope and a trial Euler
/// step (Hairer, Nørsett and Wanner's heuristic). Costs one evaluation.
fn initial_step<F: VectorField + ?Sized>(
    f: &F,
    t0: f64,
    y0: &Vector,
    k1: &Vector,
    dir: f64,
    span: &AdaptiveSpan,
) -> f64 {
    let d0 = rms_scaled(y0, y0, span);
    let d1 = rms_scaled(k1, y0, span);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let mut y1 = y0.clone();
    y1.axpy(dir * h0, k1);
    let k2 = f.eval(t0 + dir * h0, &y1);
    let d2 = rms_scaled(&k2.sub(k1), y0, span) / h0;
    let m = d1.max(d2);
    let h1 = if m <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / m).powf(EXPONENT)
    };
    let h = (100.0 * h0).min(h1);
    if h.is_finite() && h > 0.0 {
        h
    } else {
        1e-6
    }
}

/// Integrates `f` over `span` with error-controlled step sizes.
///
/// Each accepted step has RMS-normalized error estimate `<= 1`; those
/// estimates are recorded in the trace.
pub fn dopri5_solve<F: VectorField + ?Sized>(
    f: &F,
    h0: &Vector,
    span: &AdaptiveSpan,
) -> Result<SolveTrace> {
    h0.check_len("dopri5 initial state", f.dim())?;
    span.validate()?;
    let cfg = &span.config;
    let mut trace = SolveTrace::start(span.t0, h0.clone());
    let total = span.t1 - span.t0;
    if total == 0.0 {
        return Ok(trace);
    }
    let dir = total.signum();
    let floor = cfg.min_step_fraction * total.abs();

    let mut t = span.t0;
    let mut y = h0.clone();
    let mut k1 = f.eval(t, &y);
    trace.evaluations += 1;

    // A vanishing initial slope lets the full span be tried first; the
    // controller falls back to the usual start on rejection.
    let mut dt = if k1.iter().all(|&v| v == 0.0) {
        total
    } else {
        match cfg.initial_step_fraction {
            Some(fraction) => total * fraction,
            None => {
                trace.evaluations += 1;
                dir * initial_step(f, span.t0, &y, &k1, dir, span).min(total.abs())
            }
        }
    };
    let mut attempts = 0usize;

    loop {
        let remaining = span.t1 - t;
        if remaining * dir <= 0.0 {
            break;
        }
        if dt.abs() >= remaining.abs() {
            dt = remaining;
        }
        if attempts >= span.max_steps {
            return Err(Error::NonConvergence {
                max_steps: span.max_steps,
                t,
            });
        }
        attempts += 1;

        let a = attempt(f, t, &y, &k1, dt, span);
        trace.evaluations += 6;
        if a.err <= 1.0 {
            let t_next = if dt == remaining { span.t1 } else { t + dt };
            t = t_next;
            y = a.y_new;
            k1 = a.k7;
            trace.push_accepted(t, y.clone(), 0);
            trace.error_estimates.push(a.err);
            let factor = if a.err == 0.0 {
                cfg.max_growth
            } else {
                (cfg.safety * a.err.powf(-EXPONENT)).clamp(cfg.min_shrink, cfg.max_growth)
            };
            dt *= factor;
        } else {
            trace.rejected += 1;
            let factor = if a.err.is_finite() {
                (cfg.safety * a.err.powf(-EXPONENT)).clamp(cfg.min_shrink, 1.0)
            } else {
                cfg.min_shrink
            };
            dt *= factor;
        }
        if dt.abs() < floor && (span.t1 - t).abs() > floor {
            return Err(Error::Stiffness {
                t,
                step: dt.abs(),
                floor,
            });
        }
    }
    Ok(trace)
}

/// Adaptive solve through an ordered list of output times, restarting the
/// controller on each gap. Tolerances and controller settings come from
/// `settings`; its own endpoints are replaced gap by gap. Returns the states
/// at `times`.
pub fn dopri5_path<F: VectorField + ?Sized>(
    f: &F,
    y0: &Vector,
    t_start: f64,
    times: &[f64],
    settings: &AdaptiveSpan,
) -> Result<Vec<Vector>> {
    let mut out = Vec::with_capacity(times.len());
    let mut y = y0.clone();
    let mut t_prev = t_start;
    for &t in times {
        let span = AdaptiveSpan {
            t0: t_prev,
            t1: t,
            ..*settings
        };
        y = dopri5_solve(f, &y, &span)?.final_state().clone();
        out.push(y.clone());
        t_prev = t;
    }
    Ok(out)
}
