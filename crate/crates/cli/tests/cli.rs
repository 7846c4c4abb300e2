mod common;

use clap::Parser;
use latode::data::WindowSpec;
use latode::train::{GradCheckTarget, ProbeCell};
use latode_cli::commands::{cmd_gradcheck, cmd_gradflow, cmd_spiral, cmd_timeseries};
use latode_cli::config::{Preset, WindowArg};
use latode_cli::error::CliError;
use latode_cli::{run, Cli};

use common::{synthetic_climate_csv, tiny_config};

#[test]
fn zero_epoch_spiral_run_still_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(tmp.path());
    cfg.epochs = 0;
    let s = cmd_spiral(&cfg).unwrap();
    assert_eq!(s.outcomes.len(), 3);
    for name in ["config.toml", "seed.txt", "summary.csv", "spirals.cache"] {
        assert!(s.dir.join(name).is_file(), "{name}");
    }
    for o in &s.outcomes {
        let vdir = s.dir.join(o.variant.slug());
        for name in [
            "train_log.csv",
            "model.ckpt",
            "metrics.csv",
            "trajectory_cw.csv",
            "trajectory_ccw.csv",
            "figure_cw.svg",
            "figure_ccw.svg",
        ] {
            assert!(vdir.join(name).is_file(), "{} {name}", o.variant);
        }
        let traj = std::fs::read_to_string(vdir.join("trajectory_cw.csv")).unwrap();
        assert!(traj.starts_with("t,truth_x,truth_y,pred_x,pred_y\n"));
        assert!(o.metrics.iter().all(|m| m.reconstruction_mse.is_finite()));
    }
}

#[test]
fn run_directory_replays_from_its_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let s = cmd_spiral(&cfg).unwrap();
    let text = std::fs::read_to_string(s.dir.join("config.toml")).unwrap();
    let replay = latode_cli::config::RunConfig::from_toml(Preset::Desk, &text).unwrap();
    assert_eq!(replay, cfg);
}

#[test]
fn gradcheck_default_passes_and_tight_tolerance_names_blocks() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(tmp.path());
    let ok = cmd_gradcheck(&cfg).unwrap();
    assert!(ok.passed());
    assert_eq!(ok.reports.len(), GradCheckTarget::ALL.len());

    cfg.tolerance = 1e-12;
    cfg.gradcheck_targets = vec![GradCheckTarget::LatentOdeRnn];
    let bad = cmd_gradcheck(&cfg).unwrap();
    assert!(!bad.passed());
    let failed = bad.failed_blocks();
    assert!(!failed.is_empty());
    assert!(failed.iter().all(|f| f.contains('/') && !f.ends_with('/')));
    let text = std::fs::read_to_string(bad.dir.join("gradcheck.txt")).unwrap();
    assert!(text.contains("FAIL"));
}

#[test]
fn failing_gradcheck_is_a_command_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let cli = Cli::try_parse_from([
        "latode",
        "--out-dir",
        out,
        "gradcheck",
        "--tolerance",
        "1e-12",
        "--model",
        "rnn-cell,latent-ode-rnn",
    ])
    .unwrap();
    assert!(matches!(run(&cli), Err(CliError::GradCheckFailed { .. })));
}

#[test]
fn gradflow_sweep_writes_reports_and_flags_short_fits() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(tmp.path());
    cfg.probe_scales = vec![0.3, 3.0];
    cfg.probe_lengths = vec![2, 20];
    let s = cmd_gradflow(&cfg).unwrap();
    assert_eq!(s.reports.len(), 2 * 2 * 2);
    assert!(s.dir.join("gradflow_rnn_s0.3_n20.csv").is_file());
    assert!(s.dir.join("gradflow_lstm_s3_n2.csv").is_file());
    let summary = std::fs::read_to_string(s.dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 8);
    for line in summary.lines().filter(|l| l.contains(",2,")) {
        assert!(line.contains("undefined"), "{line}");
    }
    let rnn: Vec<f64> = s
        .reports
        .iter()
        .filter(|r| r.cell == ProbeCell::Rnn && r.length == 20)
        .map(|r| r.slope.unwrap())
        .collect();
    assert!(rnn[0] < rnn[1]);
}

#[test]
fn single_repeat_timeseries_has_zero_spread() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(tmp.path());
    cfg.csv = Some(synthetic_climate_csv(tmp.path(), 100));
    cfg.windows = vec![WindowArg(WindowSpec::new(7, 7))];
    cfg.repeats = 1;
    let s = cmd_timeseries(&cfg).unwrap();
    assert_eq!((s.train_points, s.test_points), (75, 25));
    assert_eq!(s.cells.len(), 1);
    assert_eq!(s.cells[0].len(), 3);
    for c in &s.cells[0] {
        assert!(c.mean.is_finite());
        assert_eq!(c.std, 0.0);
    }
    assert!(s
        .dir
        .join("7-7")
        .join("latent-ode-rnn")
        .join("repeat0")
        .join("train_log.csv")
        .is_file());
    let table = std::fs::read_to_string(s.dir.join("table.md")).unwrap();
    assert!(table.contains("| D7/7 |"));
}

#[test]
fn separate_test_csv_is_placed_on_the_training_time_axis() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(tmp.path());
    let full = synthetic_climate_csv(tmp.path(), 60);
    let text = std::fs::read_to_string(&full).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let train_path = tmp.path().join("train.csv");
    let test_path = tmp.path().join("test.csv");
    std::fs::write(&train_path, lines[..46].join("\n")).unwrap();
    std::fs::write(
        &test_path,
        format!("{}\n{}", lines[0], lines[46..].join("\n")),
    )
    .unwrap();
    cfg.csv = Some(train_path);
    cfg.test_csv = Some(test_path);
    cfg.windows = vec![WindowArg(WindowSpec::new(7, 7))];
    cfg.variants = vec![latode_cli::config::VariantName::LatentOdeRnn];
    cfg.repeats = 1;
    let s = cmd_timeseries(&cfg).unwrap();
    assert_eq!((s.train_points, s.test_points), (45, 15));
    assert_eq!(s.runs[0].test_windows, 2);
}

#[test]
fn missing_csv_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    assert!(matches!(cmd_timeseries(&cfg), Err(CliError::Config(_))));
}

#[test]
fn flags_override_file_which_overrides_preset() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("run.toml");
    std::fs::write(&file, "seed = 11\nepochs = 5\nbatch_size = 3\n").unwrap();
    let cli = Cli::try_parse_from([
        "latode",
        "--config",
        file.to_str().unwrap(),
        "--seed",
        "99",
        "spiral",
        "--epochs",
        "1",
        "--variants",
        "latent-ode-lstm-gc",
    ])
    .unwrap();
    let cfg = cli.resolve_config().unwrap();
    assert_eq!(cfg.seed, 99);
    assert_eq!(cfg.epochs, 1);
    assert_eq!(cfg.batch_size, 3);
    assert_eq!(
        cfg.variants,
        vec![latode_cli::config::VariantName::LatentOdeLstmGc]
    );

    let full = Cli::try_parse_from(["latode", "--preset", "paper-spiral", "spiral"]).unwrap();
    let cfg = full.resolve_config().unwrap();
    assert_eq!(
        (cfg.hidden_dim, cfg.batch_size, cfg.epochs),
        (20, 1000, 750)
    );
    assert!(Cli::try_parse_from(["latode", "--preset", "nope", "spiral"]).is_err());
}
