//! The four subcommands. Each returns a summary for programmatic callers
//! and writes its artifacts into a run directory.

mod gradcheck;
mod gradflow;
mod spiral;
mod timeseries;

pub use gradcheck::{cmd_gradcheck, GradcheckSummary};
pub use gradflow::{cmd_gradflow, GradflowSummary};
pub use spiral::{cmd_spiral, DirectionMetrics, SpiralSummary, VariantOutcome};
pub use timeseries::{cmd_timeseries, format_table, TableCell, TimeseriesSummary};

use std::path::{Path, PathBuf};

use latode::latent::{LatentOdeModel, ModelVariant};
use latode::train::{train_epochs, TrainExample, TrainLog};
use latode::Error;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{ensure_dir, run_dir, write_atomic};

/// Seed offset between reseeded attempts.
const RETRY_SEED_STRIDE: u64 = 1000;

/// A trained model with its log and how many attempts diverged first.
pub struct Trained {
    pub model: LatentOdeModel,
    pub log: TrainLog,
    pub aborts: usize,
}

/// Trains a fresh model, reseeding after each divergence up to `cfg.retries` times.
pub fn train_with_retries(
    cfg: &RunConfig,
    variant: ModelVariant,
    dim: usize,
    seed: u64,
    data: &[TrainExample],
) -> CliResult<Trained> {
    let model_cfg = cfg.model_config(dim);
    let mut aborts = 0;
    loop {
        let attempt_seed = seed.wrapping_add(RETRY_SEED_STRIDE * aborts as u64);
        let mut model = LatentOdeModel::init(variant, &model_cfg, attempt_seed)?;
        let mut train_cfg = cfg.train_config();
        train_cfg.seed = attempt_seed;
        match train_epochs(&mut model, data, &train_cfg) {
            Ok(log) => return Ok(Trained { model, log, aborts }),
            Err(e @ Error::TrainingDiverged { .. }) => {
                aborts += 1;
                log::warn!("{variant} attempt {aborts} diverged: {e}");
                if aborts > cfg.retries {
                    return Err(CliError::Diverged {
                        variant: variant.name().to_string(),
                        attempts: aborts,
                        last: Box::new(e),
                    });
                }
            }
            Err(e) => return Err(e.into()),
        }
    }
}

/// Creates the run directory and records the resolved config and seed.
fn prepare_run(cfg: &RunConfig, command: &str) -> CliResult<PathBuf> {
    let dir = run_dir(cfg.out_dir.as_deref(), command);
    ensure_dir(&dir)?;
    write_atomic(&dir.join("config.toml"), cfg.to_toml().as_bytes())?;
    write_atomic(&dir.join("seed.txt"), format!("{}\n", cfg.seed).as_bytes())?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    write_atomic(path, text.as_bytes())
}
