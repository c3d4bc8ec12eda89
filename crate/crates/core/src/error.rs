use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
///
/// `Validation` errors signal bad inputs or configuration; everything else is
/// a runtime failure. The CLI maps the two groups to different exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation failed for `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("load error in {file}: {reason}")]
    Load { file: PathBuf, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in `{0}`")]
    NonFinite(String),

    #[error("training diverged at step {step}: {reason}")]
    Diverged { step: usize, reason: String },

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("CSV error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by invalid inputs rather than runtime failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation { .. } | Error::Shape(_) | Error::Insufficient(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
