use std::path::{Path, PathBuf};

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] latode::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{variant} diverged on every one of {attempts} attempts: {last}")]
    Diverged {
        variant: String,
        attempts: usize,
        last: Box<latode::Error>,
    },

    #[error("gradient check failed for {failed} of {total} parameter blocks")]
    GradCheckFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }
}
