use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch { expected: Vec<usize>, actual: Vec<usize> },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("power iteration did not converge after {iterations} iterations (last estimate {last_estimate})")]
    ConvergenceFailure { iterations: usize, last_estimate: f64 },

    #[error("relevance reaches neuron {neuron} of layer {layer} through a zero denominator")]
    DegenerateNeuron { layer: usize, neuron: usize },

    #[error("{degenerate} of {total} redistribution columns are degenerate")]
    DegenerateMatrix { degenerate: usize, total: usize },

    #[error("layer {layer} has no admissible column")]
    NoAdmissibleColumn { layer: usize },

    #[error("entry ({row}, {col}) grows from {before} at gamma={gamma_lo} to {after} at gamma={gamma_hi}")]
    MonotonicityViolation {
        row: usize,
        col: usize,
        gamma_lo: f64,
        gamma_hi: f64,
        before: f64,
        after: f64,
    },

    #[error("training failed: {reason}")]
    TrainingFailure { reason: String, loss_history: Vec<f64> },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
