use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dataset has an empty train split ({0})")]
    EmptyDataset(PathBuf),

    #[error("{path}:{line}: timestamp {time} is not a multiple of the interval {interval}")]
    Granularity {
        path: PathBuf,
        line: usize,
        time: i64,
        interval: u64,
    },

    #[error("{what} index {index} out of range (size {size})")]
    Index {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("could only build {achieved} of {requested} distinct candidates")]
    CandidateShortfall { requested: usize, achieved: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("dataset cache error: {0}")]
    Cache(String),

    #[error("sequence length {got} does not match predictor input length {expected}")]
    SequenceLength { expected: usize, got: usize },

    #[error("statistics error: {0}")]
    Stat(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for usage/config/input problems, 3 for runtime
    /// and numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) | Error::Sampling(_) | Error::CandidateShortfall { .. } => 3,
            _ => 2,
        }
    }
}
