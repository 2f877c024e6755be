//! Dataset persistence formats, report files, SVG plots and the CLI command
//! implementations.

pub mod commands;
pub mod dataset_io;
pub mod formats;
pub mod plots;
pub mod report;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("integrity error in {file}: {reason}")]
    Integrity { file: String, reason: String },
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn io(path: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// Process exit code: usage errors exit 1, data/integrity errors exit 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

impl From<mmresgnn_core::CoreError> for CliError {
    fn from(e: mmresgnn_core::CoreError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<mmresgnn_model::ModelError> for CliError {
    fn from(e: mmresgnn_model::ModelError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<mmresgnn_harness::HarnessError> for CliError {
    fn from(e: mmresgnn_harness::HarnessError) -> Self {
        match e {
            mmresgnn_harness::HarnessError::UnknownVariant { .. } => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
