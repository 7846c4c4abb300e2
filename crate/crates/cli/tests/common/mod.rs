#![allow(dead_code)]

use std::fmt::Write;
use std::path::{Path, PathBuf};

use latode_cli::config::{Preset, RunConfig};

/// Daily climate-style rows starting 2013-01-01 with smooth seasonal features.
pub fn synthetic_climate_csv(dir: &Path, rows: usize) -> PathBuf {
    let mut s = String::from("date,meantemp,humidity,wind_speed,meanpressure\n");
    for i in 0..rows {
        let t = i as f64;
        let season = (2.0 * std::f64::consts::PI * t / 365.0).sin();
        let week = (2.0 * std::f64::consts::PI * t / 7.0).cos();
        let _ = writeln!(
            s,
            "{},{:.4},{:.4},{:.4},{:.4}",
            chrono_free_date(i),
            20.0 + 8.0 * season + 0.5 * week,
            60.0 - 15.0 * season,
            6.0 + 2.0 * week,
            1010.0 - 5.0 * season
        );
    }
    let path = dir.join("climate.csv");
    std::fs::write(&path, s).unwrap();
    path
}

/// `YYYY-MM-DD` for day `i` after 2013-01-01, without a date crate.
fn chrono_free_date(i: usize) -> String {
    let mut days = i as i64;
    let mut year = 2013;
    loop {
        let len = if is_leap(year) { 366 } else { 365 };
        if days < len {
            break;
        }
        days -= len;
        year += 1;
    }
    let months = [
        31,
        if is_leap(year) { 29 } else { 28 },
        31,
        30,
        31,
        30,
        31,
        31,
        30,
        31,
        30,
        31,
    ];
    let mut month = 0;
    while days >= months[month] {
        days -= months[month];
        month += 1;
    }
    format!("{year:04}-{:02}-{:02}", month + 1, days + 1)
}

fn is_leap(y: i64) -> bool {
    (y % 4 == 0 && y % 100 != 0) || y % 400 == 0
}

/// Desk preset with a tiny model, writing into `dir`.
pub fn tiny_config(dir: &Path) -> RunConfig {
    let mut cfg = Preset::Desk.config();
    cfg.out_dir = Some(dir.to_path_buf());
    cfg.hidden_dim = 4;
    cfg.latent_dim = 2;
    cfg.encoder_field_hidden = 4;
    cfg.translator_hidden = 4;
    cfg.dynamics_hidden = 4;
    cfg.output_hidden = 4;
    cfg.encoder_steps_per_gap = 1;
    cfg.decoder_steps_per_gap = 1;
    cfg.n_per_direction = 3;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.repeats = 2;
    cfg
}
