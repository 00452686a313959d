use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("invalid table: {0}")]
    InvalidTable(String),

    #[error("invalid distribution: {0}")]
    InvalidCdf(String),

    #[error("cannot compare conditioning statistics of different kinds")]
    InvalidComparison,

    #[error(
        "grouping did not converge after {restarts} radius restarts (radius trace: {trace:?})"
    )]
    GroupingDidNotConverge { restarts: usize, trace: Vec<f64> },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("study contains no hypotheses")]
    EmptyStudy,

    #[error("proportion estimate {0} lies outside [0, 1]")]
    InvalidEstimate(f64),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialize(String),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema(_) => 3,
            Error::Parse { .. } => 4,
            Error::Io { .. } => 6,
            Error::InvalidConfig(_) => 2,
            _ => 5,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
