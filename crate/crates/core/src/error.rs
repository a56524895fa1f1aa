use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("estimator {estimator} requires a {required} head, model has {actual}")]
    HeadMismatch {
        estimator: &'static str,
        required: &'static str,
        actual: &'static str,
    },

    #[error("non-finite loss at epoch {epoch}, step {step}: {value}")]
    Divergence { epoch: usize, step: usize, value: f64 },

    #[error("pool exhausted: {available} samples left, {required} required")]
    PoolExhausted { available: usize, required: usize },

    #[error("sample {0} has no hidden label")]
    NoHiddenLabel(u64),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed file: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("{path}: unsupported format version {found} (expected {expected})")]
    Version {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
