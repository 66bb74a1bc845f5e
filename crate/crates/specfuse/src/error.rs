//! Error type shared across the toolkit.

use std::path::PathBuf;
use thiserror::Error;

/// Toolkit-wide error type.
///
/// The variants map onto the CLI exit codes: input problems exit with 1,
/// configuration problems with 2, everything else with 3.
#[derive(Debug, Error)]
pub enum Error {
    /// Unreadable, undecodable, or malformed input data.
    #[error("input error: {0}")]
    Input(String),

    /// Inconsistent or out-of-range configuration.
    #[error("config error: {0}")]
    Config(String),

    /// A caller violated an operation contract (e.g. mismatched tensor dims).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Malformed protocol or score file, with per-line diagnostics.
    #[error("parse error in {path}: {}", offenders.join("; "))]
    Parse {
        /// File the offending lines came from.
        path: PathBuf,
        /// One human-readable message per malformed line.
        offenders: Vec<String>,
    },

    /// Training diverged (non-finite loss) and was aborted.
    #[error("training aborted: {0}")]
    TrainAbort(String),

    /// Filesystem failure.
    #[error("io error on {path}: {source}")]
    Io {
        /// Path involved in the failed operation.
        path: PathBuf,
        /// Underlying error.
        source: std::io::Error,
    },

    /// Anything that indicates a bug rather than bad input.
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// Attach a path to a bare `std::io::Error`.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code for this error, per the CLI contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_) | Error::Parse { .. } => 1,
            Error::Config(_) => 2,
            Error::Contract(_) | Error::TrainAbort(_) | Error::Io { .. } | Error::Internal(_) => 3,
        }
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
