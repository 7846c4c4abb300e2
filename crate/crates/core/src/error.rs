use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    Shape {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("solver diverged: non-finite state at step {step} (t = {t})")]
    Divergence { step: usize, t: f64 },

    #[error("adaptive solver did not converge within {max_steps} steps (reached t = {t})")]
    NonConvergence { max_steps: usize, t: f64 },

    #[error("step size {step:e} fell below floor {floor:e} at t = {t}; problem looks stiff")]
    Stiffness { t: f64, step: f64, floor: f64 },

    #[error("non-finite gradient in parameter `{name}`")]
    NonFiniteGradient { name: String },

    #[error("training diverged at epoch {epoch}: {reason}")]
    TrainingDiverged {
        epoch: usize,
        reason: String,
        /// Per-epoch records logged before the abort.
        log: Box<crate::train::TrainLog>,
    },

    #[error("schema error: expected columns [{expected}], found [{found}]")]
    Schema { expected: String, found: String },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("malformed {what}: {msg}")]
    Format { what: &'static str, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: impl ToString, right: impl ToString) -> Self {
        Error::Shape {
            op,
            left: left.to_string(),
            right: right.to_string(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
