use std::fmt::Write;
use std::path::PathBuf;

use latode::train::{run_gradcheck, GradCheckReport, GradCheckSizes};

use super::{prepare_run, write_text};
use crate::config::RunConfig;
use crate::error::CliResult;
use crate::output::num;

#[derive(Clone, Debug)]
pub struct GradcheckSummary {
    pub dir: PathBuf,
    pub reports: Vec<GradCheckReport>,
}

impl GradcheckSummary {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(GradCheckReport::passed)
    }

    pub fn total_blocks(&self) -> usize {
        self.reports.iter().map(|r| r.blocks.len()).sum()
    }

    /// `target/block` for every block over tolerance.
    pub fn failed_blocks(&self) -> Vec<String> {
        self.reports
            .iter()
            .flat_map(|r| r.failures().map(move |b| format!("{}/{}", r.label, b.name)))
            .collect()
    }
}

/// Compares every configured target's reverse pass against centered
/// finite differences. Failures are reported in the summary, not as errors.
pub fn cmd_gradcheck(cfg: &RunConfig) -> CliResult<GradcheckSummary> {
    cfg.validate()?;
    let dir = prepare_run(cfg, "gradcheck")?;
    let sizes = GradCheckSizes::default();
    let mut reports = Vec::new();
    let mut text = String::new();
    let mut csv = String::from("target,block,len,max_rel_error,max_abs_error,passed\n");
    for &target in &cfg.gradcheck_targets {
        let report = run_gradcheck(target, &sizes, cfg.seed, cfg.tolerance)?;
        let _ = write!(text, "{report}");
        for b in &report.blocks {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                report.label,
                b.name,
                b.len,
                num(b.max_rel_error),
                num(b.max_abs_error),
                b.max_rel_error <= report.tolerance
            );
        }
        reports.push(report);
    }
    let summary = GradcheckSummary { dir, reports };
    let failed = summary.failed_blocks();
    let _ = writeln!(
        text,
        "{} of {} blocks within relative tolerance {:e}",
        summary.total_blocks() - failed.len(),
        summary.total_blocks(),
        cfg.tolerance
    );
    write_text(&summary.dir.join("gradcheck.txt"), &text)?;
    write_text(&summary.dir.join("gradcheck.csv"), &csv)?;
    Ok(summary)
}
