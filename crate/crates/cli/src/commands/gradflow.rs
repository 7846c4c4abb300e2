use std::fmt::Write;
use std::path::PathBuf;

use latode::train::{grad_flow_probe, GradReport, ProbeConfig, Regime};

use super::{prepare_run, write_text};
use crate::config::RunConfig;
use crate::error::CliResult;
use crate::output::num;

#[derive(Clone, Debug)]
pub struct GradflowSummary {
    pub dir: PathBuf,
    pub reports: Vec<GradReport>,
}

fn report_name(r: &GradReport) -> String {
    format!(
        "gradflow_{}_s{}_n{}.csv",
        r.cell.name(),
        num(r.scale),
        r.length
    )
}

/// Sweeps cells, recurrent scales and lengths, writing each chain of norms
/// and a summary of fitted slopes.
pub fn cmd_gradflow(cfg: &RunConfig) -> CliResult<GradflowSummary> {
    cfg.validate()?;
    let dir = prepare_run(cfg, "gradflow")?;
    let mut reports = Vec::new();
    let mut summary = String::from(
        "cell,scale,length,slope,regime,spectral_radius,operator_norm,predicted_slope_spectral,predicted_slope_operator\n",
    );
    let opt = |v: Option<f64>| v.map_or("undefined".to_string(), num);
    for &cell in &cfg.probe_cells {
        for &scale in &cfg.probe_scales {
            for &length in &cfg.probe_lengths {
                let probe = ProbeConfig {
                    cell,
                    hidden_dim: cfg.probe_hidden,
                    scale,
                    length,
                    seed: cfg.seed,
                    saturation: cfg.probe_saturation,
                };
                let r = grad_flow_probe(&probe)?;
                write_text(&dir.join(report_name(&r)), &r.to_csv())?;
                let _ = writeln!(
                    summary,
                    "{},{},{},{},{},{},{},{},{}",
                    cell.name(),
                    num(scale),
                    length,
                    opt(r.slope),
                    r.regime.map_or("undefined", Regime::name),
                    num(r.spectral_radius),
                    num(r.operator_norm),
                    opt(r.predicted_slope_spectral),
                    opt(r.predicted_slope_operator)
                );
                reports.push(r);
            }
        }
    }
    write_text(&dir.join("summary.csv"), &summary)?;
    Ok(GradflowSummary { dir, reports })
}
