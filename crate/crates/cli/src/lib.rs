//! Experiment commands behind the `xai-spectral` binary.
//!
//! Every command reads a flat [`Config`], writes CSV reports with a fixed
//! float format and returns a [`CliError`] whose [`exit_code`](CliError::exit_code)
//! separates user errors (2) from numeric or internal failures (1).

pub mod commands;
pub mod config;
pub mod heatmap;
pub mod report;
mod setup;

use std::fmt;

pub use config::Config;

/// Environment variable overriding the worker count of parallel commands.
pub const WORKERS_ENV: &str = "XAI_SPECTRAL_WORKERS";

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config keys or paths.
    Usage(String),
    /// Numeric failure or unexpected internal error.
    Internal(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        CliError::Internal(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<xai_spectral::Error> for CliError {
    fn from(e: xai_spectral::Error) -> Self {
        use xai_spectral::Error as E;
        match e {
            E::InvalidInput(_) | E::ShapeMismatch { .. } | E::Format { .. } | E::Io { .. } => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Internal(e.to_string()),
        }
    }
}
