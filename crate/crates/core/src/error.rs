use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by fitting, bounding, simulation and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("arithmetic range exceeded: {0}")]
    Range(String),

    #[error("numeric failure during {stage}: {detail}")]
    Numeric { stage: &'static str, detail: String },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("integration failed for sample {sample} at step {step}: non-finite state")]
    Integration { sample: u64, step: usize },

    #[error("configuration error at {field}: {detail}")]
    Config { field: String, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn numeric(stage: &'static str, detail: impl ToString) -> Self {
        Error::Numeric {
            stage,
            detail: detail.to_string(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
