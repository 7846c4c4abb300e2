//! Command-line driver: configuration, run directories, figures and the
//! four experiment commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod plot;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use latode::data::Schema;
use latode::train::{GradCheckTarget, ProbeCell};

use crate::config::{Preset, RunConfig, VariantName};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "latode",
    version,
    about = "Latent ODE experiments on spirals and daily series"
)]
pub struct Cli {
    /// TOML file overlaid on the preset.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory; defaults to $LATODE_OUT_DIR/<command>, else runs/<command>.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// desk, paper-spiral, paper-climate, paper-djia or lstm-carousel.
    #[arg(long, global = true, default_value = "desk")]
    pub preset: Preset,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on two-direction spirals and plot interpolation and extrapolation.
    Spiral(SpiralArgs),
    /// Seen/predict forecasting on a daily CSV.
    Timeseries(TimeseriesArgs),
    /// Compare reverse-mode gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Measure how Jacobian-chain norms scale with temporal distance.
    Gradflow(GradflowArgs),
}

#[derive(Debug, Args)]
pub struct SpiralArgs {
    /// Comma-separated variant names, or `all`.
    #[arg(long)]
    pub variants: Option<VariantList>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TimeseriesArgs {
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Separate test CSV; without it the training CSV is split chronologically.
    #[arg(long)]
    pub test_csv: Option<PathBuf>,
    /// climate or stock.
    #[arg(long)]
    pub schema: Option<Schema>,
    #[arg(long)]
    pub ticker: Option<String>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub variants: Option<VariantList>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Maximum relative error per parameter block.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Comma-separated targets, e.g. `latent-ode-rnn,lstm-cell`.
    #[arg(long, value_delimiter = ',', value_parser = parse_target)]
    pub model: Option<Vec<GradCheckTarget>>,
}

#[derive(Debug, Args)]
pub struct GradflowArgs {
    #[arg(long, value_delimiter = ',')]
    pub scales: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub cells: Option<Vec<ProbeCell>>,
    #[arg(long, value_delimiter = ',')]
    pub lengths: Option<Vec<usize>>,
}

/// Variant names from one flag value.
#[derive(Clone, Debug)]
pub struct VariantList(pub Vec<VariantName>);

impl std::str::FromStr for VariantList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        VariantName::parse_list(s).map(VariantList)
    }
}

fn parse_target(s: &str) -> Result<GradCheckTarget, String> {
    GradCheckTarget::parse(s).ok_or_else(|| {
        let names: Vec<&str> = GradCheckTarget::ALL.iter().map(|t| t.name()).collect();
        format!("unknown target {s:?}; expected one of {}", names.join(", "))
    })
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl Cli {
    /// Preset, then config file, then flags.
    pub fn resolve_config(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(self.preset, path)?,
            None => self.preset.config(),
        };
        set(&mut cfg.seed, self.seed);
        if self.out_dir.is_some() {
            cfg.out_dir = self.out_dir.clone();
        }
        match &self.command {
            Command::Spiral(a) => {
                set(&mut cfg.variants, a.variants.clone().map(|v| v.0));
                set(&mut cfg.epochs, a.epochs);
            }
            Command::Timeseries(a) => {
                if a.csv.is_some() {
                    cfg.csv = a.csv.clone();
                }
                if a.test_csv.is_some() {
                    cfg.test_csv = a.test_csv.clone();
                }
                if a.ticker.is_some() {
                    cfg.ticker = a.ticker.clone();
                }
                set(&mut cfg.schema, a.schema);
                set(&mut cfg.repeats, a.repeats);
                set(&mut cfg.variants, a.variants.clone().map(|v| v.0));
                set(&mut cfg.epochs, a.epochs);
            }
            Command::Gradcheck(a) => {
                set(&mut cfg.tolerance, a.tolerance);
                set(&mut cfg.gradcheck_targets, a.model.clone());
            }
            Command::Gradflow(a) => {
                set(&mut cfg.probe_scales, a.scales.clone());
                set(&mut cfg.probe_cells, a.cells.clone());
                set(&mut cfg.probe_lengths, a.lengths.clone());
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Runs one parsed invocation. A failed gradient check is an error so the
/// process exits nonzero.
pub fn run(cli: &Cli) -> CliResult<()> {
    let cfg = cli.resolve_config()?;
    match cli.command {
        Command::Spiral(_) => {
            let s = commands::cmd_spiral(&cfg)?;
            for o in &s.outcomes {
                let ratio = o.log.initial_loss.zip(o.log.final_loss).map(|(a, b)| b / a);
                println!(
                    "{:<24} loss ratio {}  aborts {}",
                    o.variant.name(),
                    ratio.map_or("n/a".into(), |r| format!("{r:.4}")),
                    o.aborts
                );
            }
            println!("wrote {}", s.dir.display());
        }
        Command::Timeseries(_) => {
            let s = commands::cmd_timeseries(&cfg)?;
            println!(
                "{} training / {} test points",
                s.train_points, s.test_points
            );
            print!(
                "{}",
                commands::format_table(&s.windows, &s.variants, &s.cells)
            );
            println!("wrote {}", s.dir.display());
        }
        Command::Gradcheck(_) => {
            let s = commands::cmd_gradcheck(&cfg)?;
            for r in &s.reports {
                print!("{r}");
            }
            let failed = s.failed_blocks();
            println!("wrote {}", s.dir.display());
            if !failed.is_empty() {
                for f in &failed {
                    eprintln!("failed: {f}");
                }
                return Err(CliError::GradCheckFailed {
                    failed: failed.len(),
                    total: s.total_blocks(),
                });
            }
        }
        Command::Gradflow(_) => {
            let s = commands::cmd_gradflow(&cfg)?;
            for r in &s.reports {
                println!(
                    "{:<14} scale {:<6} N {:<4} slope {:>10}  {}",
                    r.cell.name(),
                    r.scale,
                    r.length,
                    r.slope.map_or("undefined".into(), |v| format!("{v:.5}")),
                    r.regime.map_or("undefined", |g| g.name())
                );
            }
            println!("wrote {}", s.dir.display());
        }
    }
    Ok(())
}
