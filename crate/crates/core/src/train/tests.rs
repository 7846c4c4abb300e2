use proptest::prelude::*;

use super::*;
use crate::cells::TimedSequence;
use crate::error::Error;
use crate::latent::{LatentOdeModel, LatentPath, ModelConfig, ModelVariant};
use crate::nn::Dense;
use crate::numcore::{Matrix, Rng, Vector};
use crate::params::ParamSet;

fn path(mu: &[f64], log_sigma: &[f64]) -> LatentPath {
    let sigma = Vector::from_vec(log_sigma.iter().map(|s| s.exp()).collect());
    LatentPath {
        mu: Vector::from(mu.to_vec()),
        log_sigma: Vector::from(log_sigma.to_vec()),
        sigma,
        eps: Vector::zeros(mu.len()),
        z0: Vector::from(mu.to_vec()),
        t0: 0.0,
        trajectory: Vec::new(),
    }
}

#[test]
fn kl_of_unit_mean_is_one_half() {
    assert_eq!(kl_divergence(&[1.0], &[0.0]), 0.5);
    assert_eq!(kl_divergence(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
}

#[test]
fn loss_combines_mse_and_weighted_kl() {
    let preds = [Vector::from([1.0, 2.0]), Vector::from([3.0, 4.0])];
    let targets = [Vector::from([1.0, 0.0]), Vector::from([3.0, 4.0])];
    let (v, cot) = loss(
        &preds,
        &targets,
        &path(&[1.0], &[0.0]),
        &LossSpec { kl_weight: 2.0 },
    )
    .unwrap();
    assert_eq!(v.mse, 1.0);
    assert_eq!(v.kl, 0.5);
    assert_eq!(v.total, 2.0);
    assert_eq!(cot.d_predictions[0].as_slice(), &[0.0, 1.0]);
    assert_eq!(cot.d_mu.as_slice(), &[2.0]);
    assert_eq!(cot.d_log_sigma.as_slice(), &[0.0]);
    let (zero, zcot) = loss(
        &targets,
        &targets,
        &path(&[0.0], &[0.0]),
        &LossSpec::default(),
    )
    .unwrap();
    assert_eq!(zero.total, 0.0);
    assert!(zcot
        .d_predictions
        .iter()
        .all(|d| d.iter().all(|&x| x == 0.0)));
}

#[test]
fn loss_rejects_misaligned_predictions() {
    let a = [Vector::from([1.0])];
    let b = [Vector::from([1.0]), Vector::from([2.0])];
    assert!(loss(&a, &b, &path(&[0.0], &[0.0]), &LossSpec::default()).is_err());
    assert!(LossSpec { kl_weight: -1.0 }.validate().is_err());
}

#[test]
fn clipping_rescales_only_above_threshold() {
    let rule = ClipRule::new(1.0).unwrap();
    let mut g = [3.0, 4.0];
    let out = clip_flat(&mut g, &rule).unwrap();
    assert!(out.clipped);
    assert_eq!(out.pre_norm, 5.0);
    assert!(out.post_norm <= 1.0);
    assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);

    let mut small = [0.3, 0.4];
    let out = clip_flat(&mut small, &rule).unwrap();
    assert!(!out.clipped);
    assert_eq!(small, [0.3, 0.4]);
    assert!(ClipRule::new(0.0).is_err());
}

#[test]
fn clipping_names_the_non_finite_block() {
    let mut d = Dense::zeros(2, 2);
    d.b.as_mut_slice()[1] = f64::NAN;
    match clip_gradients(&mut d, &ClipRule::new(1.0).unwrap()) {
        Err(Error::NonFiniteGradient { name }) => assert_eq!(name, "b[1]"),
        other => panic!("unexpected {other:?}"),
    }
}

proptest! {
    #[test]
    fn clipping_bounds_norm_and_keeps_direction(
        g in prop::collection::vec(-1e3f64..1e3, 1..30),
        threshold in 1e-3f64..10.0,
    ) {
        let rule = ClipRule::new(threshold).unwrap();
        let mut once = g.clone();
        let out = clip_flat(&mut once, &rule).unwrap();
        let norm = once.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(norm <= threshold);
        let g_norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if g_norm > 0.0 && norm > 0.0 {
            let cos = g.iter().zip(&once).map(|(a, b)| a * b).sum::<f64>() / (g_norm * norm);
            prop_assert!(cos > 1.0 - 1e-12);
        }
        prop_assert_eq!(out.clipped, g_norm >= threshold);
        let mut twice = once.clone();
        clip_flat(&mut twice, &rule).unwrap();
        let twice_norm = twice.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(twice_norm <= threshold);
        prop_assert!((twice_norm - norm).abs() <= 1e-12 * threshold);
    }

    #[test]
    fn kl_is_non_negative(
        mu in prop::collection::vec(-5f64..5.0, 1..8),
        ls in prop::collection::vec(-3f64..3.0, 8),
    ) {
        prop_assert!(kl_divergence(&mu, &ls[..mu.len()]) >= 0.0);
    }
}

#[test]
fn first_adam_step_moves_by_the_learning_rate() {
    let mut state = AdamState::new(2, AdamConfig::with_lr(0.1));
    let mut params = [1.0, -2.0];
    state.step_flat(&mut params, &[0.5, -3.0]).unwrap();
    assert!((params[0] - 0.9).abs() < 1e-7);
    assert!((params[1] + 1.9).abs() < 1e-7);
    assert_eq!(state.step_count(), 1);
    assert!((state.first_moment()[0] - 0.05).abs() < 1e-15);
    assert!(state.step_flat(&mut params, &[1.0]).is_err());
}

#[test]
fn fit_slope_examples() {
    let line: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 2.0 - 0.5 * i as f64)).collect();
    assert!((fit_slope(&line).unwrap() + 0.5).abs() < 1e-12);
    assert_eq!(fit_slope(&line[..2]), None);
    assert_eq!(fit_slope(&[(1.0, 0.0), (1.0, 1.0), (1.0, 2.0)]), None);
}

#[test]
fn regime_band() {
    assert_eq!(Regime::from_slope(-0.02), Regime::Vanishing);
    assert_eq!(Regime::from_slope(0.005), Regime::Stable);
    assert_eq!(Regime::from_slope(0.02), Regime::Exploding);
}

fn toy_data(n: usize) -> Vec<TrainExample> {
    let mut rng = Rng::new(3);
    (0..n)
        .map(|_| TrainExample::reconstruction(random_sequence(&mut rng, 5, 2).unwrap()))
        .collect()
}

fn toy_model() -> LatentOdeModel {
    LatentOdeModel::init(ModelVariant::LATENT_ODE_LSTM, &ModelConfig::small(2, 2), 4).unwrap()
}

fn toy_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 4,
        adam: AdamConfig::with_lr(0.01),
        seed: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_epochs_leave_the_model_untouched() {
    let mut m = toy_model();
    let log = train_epochs(&mut m, &toy_data(6), &toy_config(0)).unwrap();
    assert!(log.is_empty());
    assert_eq!(m, toy_model());
    assert_eq!(log.to_csv().trim(), TRAIN_LOG_HEADER);
}

#[test]
fn training_is_reproducible() {
    let data = toy_data(8);
    let mut a = toy_model();
    let mut b = toy_model();
    let la = train_epochs(&mut a, &data, &toy_config(3)).unwrap();
    let mut serial = toy_config(3);
    serial.parallel = false;
    let lb = train_epochs(&mut b, &data, &serial).unwrap();
    assert!(la.same_values(&lb));
    assert_eq!(a, b);
    assert_eq!(la.records.len(), 3);
    assert_eq!(la.to_csv().lines().count(), 4);
}

#[test]
fn clipped_training_respects_the_threshold() {
    let mut m = toy_model();
    let mut cfg = toy_config(3);
    cfg.clip = Some(ClipRule::new(0.05).unwrap());
    let log = train_epochs(&mut m, &toy_data(8), &cfg).unwrap();
    assert!(log.max_post_clip_norm().unwrap() <= 0.05 * (1.0 + 1e-12));
}

#[test]
fn gc_variant_clips_by_default() {
    let mut m = LatentOdeModel::init(
        ModelVariant::latent_ode_lstm_gc(0.01),
        &ModelConfig::small(2, 2),
        4,
    )
    .unwrap();
    let log = train_epochs(&mut m, &toy_data(8), &toy_config(2)).unwrap();
    assert!(log.max_post_clip_norm().unwrap() <= 0.01 * (1.0 + 1e-12));
}

#[test]
fn training_reduces_loss_on_a_tiny_set() {
    let mut m = toy_model();
    let mut cfg = toy_config(60);
    cfg.adam = AdamConfig::with_lr(0.02);
    let log = train_epochs(&mut m, &toy_data(4), &cfg).unwrap();
    assert!(log.final_loss.unwrap() < log.initial_loss.unwrap());
}

#[test]
fn examples_must_be_aligned() {
    let s = TimedSequence::new(vec![0.0], vec![Vector::from([1.0])]).unwrap();
    assert!(TrainExample::new(s, vec![0.0, 1.0], vec![Vector::from([1.0])]).is_err());
}

fn dense_loss(d: &Dense, x: &[f64], y: &Vector) -> f64 {
    0.5 * d.forward(x).sub(y).norm().powi(2)
}

fn dense_grad(d: &Dense, x: &[f64], y: &Vector) -> Dense {
    let r = d.forward(x).sub(y);
    let mut g = Dense::zeros(d.input_dim(), d.output_dim());
    g.w = Matrix::zeros(d.output_dim(), d.input_dim());
    g.w.add_outer(1.0, &r, x);
    g.b = r;
    g
}

#[test]
fn finite_differences_agree_on_a_linear_model() {
    let mut rng = Rng::new(8);
    let d = Dense::init(3, 2, &mut rng);
    let x = [0.3, -1.0, 0.7];
    let y = Vector::from([0.5, -0.25]);
    let g = dense_grad(&d, &x, &y);
    let report = finite_diff_check(
        "dense",
        &d,
        &g.flatten(),
        |p| Ok(dense_loss(p, &x, &y)),
        1e-8,
    )
    .unwrap();
    assert!(report.passed(), "{report}");
    assert!(report.max_rel_error() < 1e-8);
}

#[test]
fn finite_differences_catch_a_wrong_gradient() {
    let mut rng = Rng::new(9);
    let d = Dense::init(3, 2, &mut rng);
    let x = [0.3, -1.0, 0.7];
    let y = Vector::from([0.5, -0.25]);
    let mut g = dense_grad(&d, &x, &y);
    g.w.data_mut()[0] *= 1.5;
    let report = finite_diff_check(
        "dense",
        &d,
        &g.flatten(),
        |p| Ok(dense_loss(p, &x, &y)),
        1e-5,
    )
    .unwrap();
    assert!(!report.passed());
    assert!(report.max_rel_error() > 1e-2);
    assert_eq!(report.failures().next().unwrap().name, "w");
}

#[test]
fn every_gradcheck_target_passes() {
    for target in GradCheckTarget::ALL {
        let report = run_gradcheck(target, &GradCheckSizes::default(), 11, 1e-5).unwrap();
        assert!(report.passed(), "{report}");
        assert_eq!(GradCheckTarget::parse(target.name()), Some(target));
    }
}

#[test]
fn probe_regimes_follow_the_recurrent_scale() {
    let small = grad_flow_probe(&ProbeConfig::new(ProbeCell::Rnn, 0.3, 30)).unwrap();
    assert!(small.slope.unwrap() < -0.01, "{:?}", small.slope);
    assert_eq!(small.regime, Some(Regime::Vanishing));
    let large = grad_flow_probe(&ProbeConfig::new(ProbeCell::Rnn, 3.0, 30)).unwrap();
    assert!(large.slope.unwrap() > 0.01, "{:?}", large.slope);
    let carousel = grad_flow_probe(&ProbeConfig::new(ProbeCell::LstmCarousel, 1.0, 30)).unwrap();
    assert!(carousel.slope.unwrap().abs() < 0.01, "{:?}", carousel.slope);
    assert_eq!(carousel.regime, Some(Regime::Stable));
}

#[test]
fn probe_slope_grows_with_scale() {
    let slopes: Vec<f64> = [0.3, 0.8, 1.5, 3.0]
        .iter()
        .map(|&s| {
            grad_flow_probe(&ProbeConfig::new(ProbeCell::Rnn, s, 30))
                .unwrap()
                .slope
                .unwrap()
        })
        .collect();
    assert!(slopes.windows(2).all(|w| w[0] < w[1]), "{slopes:?}");
}

#[test]
fn probe_csv_lists_each_chain() {
    let r = grad_flow_probe(&ProbeConfig::new(ProbeCell::Lstm, 1.0, 10)).unwrap();
    let csv = r.to_csv();
    assert!(csv.starts_with("k,norm\n"));
    assert_eq!(
        csv.lines().filter(|l| !l.starts_with('#')).count(),
        r.chain_norms.len() + 1
    );
    assert!(csv.contains("# slope="));
}

#[test]
fn short_probes_leave_the_slope_undefined() {
    let r = grad_flow_probe(&ProbeConfig::new(ProbeCell::Rnn, 1.0, 2)).unwrap();
    assert_eq!(r.chain_norms.len(), 2);
    assert_eq!(r.slope, None);
    assert_eq!(r.regime, None);
    assert!(r.to_csv().contains("regime=undefined"));
    assert!(grad_flow_probe(&ProbeConfig::new(ProbeCell::Rnn, 1.0, 0)).is_err());
}
