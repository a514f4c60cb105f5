use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the bridge, approximator, training, and sampling layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("time {t} outside the admissible domain [{lo}, {hi}]")]
    Domain { t: f64, lo: f64, hi: f64 },

    #[error("step index {index} outside [0, {steps}]")]
    StepRange { index: usize, steps: usize },

    #[error("singular evaluation at t = {t}: {what}")]
    Singular { t: f64, what: &'static str },

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },

    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("malformed {what} at byte offset {offset}: {reason}")]
    Format {
        what: &'static str,
        offset: u64,
        reason: String,
    },

    /// The underlying error is part of the message rather than a chained
    /// source, so it prints once.
    #[error("i/o error on {path}: {err}")]
    Io { path: PathBuf, err: std::io::Error },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            err: source,
        }
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape {
            context,
            expected,
            got,
        })
    }
}
