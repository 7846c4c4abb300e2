//! Run directories and file writing.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "LATODE_OUT_DIR";

/// Output directory for `command`: the configured directory, else
/// `$LATODE_OUT_DIR/<command>`, else `runs/<command>`.
pub fn run_dir(configured: Option<&Path>, command: &str) -> PathBuf {
    match configured {
        Some(p) => p.to_path_buf(),
        None => {
            let root =
                std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
            root.join(command)
        }
    }
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Writes through a temporary sibling and renames it into place, so a
/// reader never sees a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// Shortest round-trip rendering of a float for CSV output.
pub fn num(x: f64) -> String {
    format!("{x}")
}
