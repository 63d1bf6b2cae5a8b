use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at timestamp {timestamp}: {reason}")]
    Parse { timestamp: i64, reason: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("{skipped} of {total} rows malformed, above tolerance {tolerance}")]
    TooManyMalformed {
        skipped: usize,
        total: usize,
        tolerance: f64,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("model is untrained")]
    Untrained,

    #[error("unsupported file version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("exact solver capped at {cap} events, got {events}; use heuristic mode")]
    ExactCapExceeded { events: usize, cap: usize },

    #[error("empty cluster {0}")]
    EmptyCluster(usize),

    #[error("internal consistency failure: {0}")]
    Consistency(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("stage {stage} failed ({artifact}): {source}")]
    Stage {
        stage: &'static str,
        artifact: PathBuf,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
