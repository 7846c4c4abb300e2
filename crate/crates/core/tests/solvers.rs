//! Solver accuracy on problems with closed-form solutions.

use std::f64::consts::E;

use latode::numcore::Vector;
use latode::odesolve::{dopri5_path, dopri5_solve, rk4_38_solve, AdaptiveSpan, FixedSpan, FnField};
use latode::train::fit_slope;

fn growth() -> FnField<impl Fn(f64, &[f64]) -> Vector> {
    FnField::new(1, |_, h: &[f64]| Vector::from(h.to_vec()))
}

fn rk4_error(steps: usize) -> f64 {
    let trace = rk4_38_solve(
        &growth(),
        &Vector::from([1.0]),
        &FixedSpan::new(0.0, 1.0, steps),
    )
    .unwrap();
    (trace.final_state()[0] - E).abs()
}

#[test]
fn fixed_step_error_is_fourth_order() {
    let points: Vec<(f64, f64)> = [10, 20, 40, 80, 160]
        .iter()
        .map(|&n| (-(n as f64).ln(), rk4_error(n).ln()))
        .collect();
    let slope = fit_slope(&points).unwrap();
    assert!((3.8..=4.2).contains(&slope), "slope {slope}");
}

#[test]
fn adaptive_solver_is_accurate_and_cheaper() {
    let span = AdaptiveSpan::new(0.0, 1.0, 1e-8, 1e-8);
    let trace = dopri5_solve(&growth(), &Vector::from([1.0]), &span).unwrap();
    let err = (trace.final_state()[0] - E).abs();
    assert!(err < 1e-6, "error {err}");
    let fixed_steps = (1..).find(|&n| rk4_error(n) <= err).unwrap();
    assert!(2 * trace.evaluations <= 4 * fixed_steps);
    assert_eq!(trace.final_time(), 1.0);
}

#[test]
fn rotation_is_integrated_backwards_too() {
    let rot = FnField::new(2, |_, h: &[f64]| Vector::from([-h[1], h[0]]));
    let span = AdaptiveSpan::new(0.0, -std::f64::consts::PI, 1e-10, 1e-10);
    let trace = dopri5_solve(&rot, &Vector::from([1.0, 0.0]), &span).unwrap();
    let end = trace.final_state();
    assert!(
        (end[0] + 1.0).abs() < 1e-7 && end[1].abs() < 1e-7,
        "{end:?}"
    );
    let fixed = rk4_38_solve(
        &rot,
        &Vector::from([1.0, 0.0]),
        &FixedSpan::new(0.0, -std::f64::consts::PI, 200),
    )
    .unwrap();
    assert!((fixed.final_state()[0] + 1.0).abs() < 1e-8);
}

#[test]
fn adaptive_path_hits_every_output_time() {
    let settings = AdaptiveSpan::new(0.0, 0.0, 1e-10, 1e-10);
    let times = [0.25, 0.5, 1.0, -0.5];
    let states = dopri5_path(&growth(), &Vector::from([1.0]), 0.0, &times, &settings).unwrap();
    for (t, y) in times.iter().zip(&states) {
        assert!((y[0] - t.exp()).abs() < 1e-8, "t = {t}: {}", y[0]);
    }
}
