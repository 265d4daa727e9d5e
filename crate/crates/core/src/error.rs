use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },

    #[error("record rejected by rule `{rule}`: {detail}")]
    RecordRejected { rule: &'static str, detail: String },

    #[error("empty task pool: no completed records for task `{0}`")]
    EmptyTaskPool(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite value: {0}")]
    NonFinite(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("budget {0} not allowed here: {1}")]
    Budget(u32, &'static str),

    #[error("no routable experience for task `{0}`")]
    NoRoutableExperience(String),

    #[error("embedding provider failed: {0}")]
    Embedding(String),

    #[error("degenerate column: every method scores {value} on task `{task}`")]
    DegenerateColumn { task: String, value: f64 },

    #[error("leaderboard row {row}: {reason}")]
    Leaderboard { row: usize, reason: String },

    #[error("malformed {stream} line {line}: {reason}")]
    MalformedLine {
        stream: &'static str,
        line: usize,
        reason: String,
    },

    #[error("io error at {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
