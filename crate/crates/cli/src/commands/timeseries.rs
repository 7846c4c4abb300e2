use std::fmt::{self, Write};
use std::path::PathBuf;

use latode::cells::TimedSequence;
use latode::data::{
    context_windows, load_csv_daily, window, window_examples, DailySeries, NormStats, WindowSpec,
};
use latode::latent::{LatentOdeModel, ModelVariant};
use latode::numcore::Vector;

use super::{prepare_run, train_with_retries, write_text};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::num;

/// Mean and population standard deviation of one table entry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TableCell {
    pub mean: f64,
    pub std: f64,
}

impl TableCell {
    pub fn from_samples(xs: &[f64]) -> TableCell {
        if xs.is_empty() {
            return TableCell {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        TableCell {
            mean,
            std: var.sqrt(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.mean.is_finite() && self.std.is_finite()
    }
}

impl fmt::Display for TableCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.mean, self.std)
    }
}

/// One trained repeat evaluated on one window layout.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub window: WindowSpec,
    pub variant: ModelVariant,
    pub repeat: usize,
    pub seed: u64,
    pub train_windows: usize,
    pub test_windows: usize,
    pub test_mse: f64,
    pub aborts: usize,
}

#[derive(Clone, Debug)]
pub struct TimeseriesSummary {
    pub dir: PathBuf,
    pub train_points: usize,
    pub test_points: usize,
    pub windows: Vec<WindowSpec>,
    pub variants: Vec<ModelVariant>,
    /// `cells[w][v]` for window `w` and variant `v`.
    pub cells: Vec<Vec<TableCell>>,
    pub runs: Vec<RunRecord>,
}

/// Markdown table with one row per window layout and one column per variant.
pub fn format_table(
    windows: &[WindowSpec],
    variants: &[ModelVariant],
    cells: &[Vec<TableCell>],
) -> String {
    let mut s = String::from("| seen/predict |");
    for v in variants {
        let _ = write!(s, " {} |", v.name());
    }
    s.push_str("\n|---|");
    for _ in variants {
        s.push_str("---|");
    }
    s.push('\n');
    for (w, row) in windows.iter().zip(cells) {
        let _ = write!(s, "| {} |", w.label());
        for cell in row {
            let _ = write!(s, " {cell} |");
        }
        s.push('\n');
    }
    s
}

fn load_series(cfg: &RunConfig) -> CliResult<(DailySeries, DailySeries)> {
    let path = cfg
        .csv
        .as_ref()
        .ok_or_else(|| CliError::Config("timeseries needs a csv path".into()))?;
    let full = load_csv_daily(path, cfg.schema, cfg.ticker.as_deref())?;
    match &cfg.test_csv {
        Some(test_path) => {
            let test = load_csv_daily(test_path, cfg.schema, cfg.ticker.as_deref())?;
            Ok((full.clone(), test.rebased(full.origin)))
        }
        None => Ok(full.split(cfg.split_fraction)?),
    }
}

/// Normalized values on a time axis scaled by `time_scale`.
fn to_model_sequence(
    series: &DailySeries,
    stats: &NormStats,
    time_scale: f64,
) -> CliResult<TimedSequence> {
    let times = series.times.iter().map(|t| t * time_scale).collect();
    let values = series.values.iter().map(|v| stats.apply(v)).collect();
    Ok(TimedSequence::new(times, values)?)
}

/// Moves a window so that its seen part starts at time zero.
fn anchored(pairs: Vec<(TimedSequence, TimedSequence)>) -> Vec<(TimedSequence, TimedSequence)> {
    pairs
        .into_iter()
        .map(|(seen, future)| {
            let off = -seen.times()[0];
            (seen.shifted(off), future.shifted(off))
        })
        .collect()
}

/// Mean squared error over the predict blocks, with the noise set to zero.
fn test_mse(model: &LatentOdeModel, windows: &[(TimedSequence, TimedSequence)]) -> CliResult<f64> {
    let eps = Vector::zeros(model.latent_dim());
    let (mut sum, mut count) = (0.0, 0usize);
    for (seen, future) in windows {
        let (pred, _) = model.forward_with_eps(seen, future.times(), &eps)?;
        for (p, y) in pred.iter().zip(future.values()) {
            sum += p.sub(y).iter().map(|d| d * d).sum::<f64>();
            count += p.len();
        }
    }
    Ok(if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    })
}

/// Trains every variant on each seen/predict layout and tabulates the test
/// error over repeated seeds.
pub fn cmd_timeseries(cfg: &RunConfig) -> CliResult<TimeseriesSummary> {
    cfg.validate()?;
    let (train, test) = load_series(cfg)?;
    let dir = prepare_run(cfg, "timeseries")?;
    log::info!("{} training and {} test points", train.len(), test.len());
    let stats = NormStats::from_values(&train.values)?;
    let train_seq = to_model_sequence(&train, &stats, cfg.time_scale)?;
    let test_seq = to_model_sequence(&test, &stats, cfg.time_scale)?;
    let dim = train.feature_names.len();
    let variants = cfg.resolved_variants();
    let windows: Vec<WindowSpec> = cfg.windows.iter().map(|w| w.0).collect();

    let mut runs = Vec::new();
    let mut cells = Vec::new();
    let mut metrics = String::from(
        "window,variant,repeat,seed,train_windows,test_windows,test_mse,divergence_aborts\n",
    );
    for &spec in &windows {
        let train_windows = anchored(window(&train_seq, spec)?);
        let test_windows = anchored(context_windows(&train_seq, &test_seq, spec)?);
        if train_windows.is_empty() {
            return Err(CliError::Config(format!(
                "window {} needs {} training points, only {} available",
                spec.label(),
                spec.seen + spec.predict,
                train.len()
            )));
        }
        let examples = window_examples(&train_windows)?;
        let label = format!("{}-{}", spec.seen, spec.predict);
        let mut row = Vec::new();
        for &variant in &variants {
            let mut samples = Vec::new();
            for repeat in 0..cfg.repeats {
                let seed = cfg.seed.wrapping_add(repeat as u64);
                log::info!("{variant} on {} windows, repeat {repeat}", spec.label());
                let trained = train_with_retries(cfg, variant, dim, seed, &examples)?;
                let mse = test_mse(&trained.model, &test_windows)?;
                let run_dir = dir
                    .join(&label)
                    .join(variant.slug())
                    .join(format!("repeat{repeat}"));
                write_text(&run_dir.join("train_log.csv"), &trained.log.to_csv())?;
                let _ = writeln!(
                    metrics,
                    "{},{},{},{},{},{},{},{}",
                    spec.label(),
                    variant.slug(),
                    repeat,
                    seed,
                    train_windows.len(),
                    test_windows.len(),
                    num(mse),
                    trained.aborts
                );
                samples.push(mse);
                runs.push(RunRecord {
                    window: spec,
                    variant,
                    repeat,
                    seed,
                    train_windows: train_windows.len(),
                    test_windows: test_windows.len(),
                    test_mse: mse,
                    aborts: trained.aborts,
                });
            }
            row.push(TableCell::from_samples(&samples));
        }
        cells.push(row);
    }

    let mut table_csv = String::from("window");
    for v in &variants {
        let _ = write!(table_csv, ",{0}_mean,{0}_std", v.slug());
    }
    table_csv.push('\n');
    for (spec, row) in windows.iter().zip(&cells) {
        table_csv.push_str(&spec.label());
        for c in row {
            let _ = write!(table_csv, ",{},{}", num(c.mean), num(c.std));
        }
        table_csv.push('\n');
    }
    write_text(&dir.join("metrics.csv"), &metrics)?;
    write_text(&dir.join("table.csv"), &table_csv)?;
    write_text(
        &dir.join("table.md"),
        &format_table(&windows, &variants, &cells),
    )?;
    Ok(TimeseriesSummary {
        dir,
        train_points: train.len(),
        test_points: test.len(),
        windows,
        variants,
        cells,
        runs,
    })
}
