use thiserror::Error;

use crate::track::ObjectId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty window: no samples at or after t={from_time}")]
    EmptyWindow { from_time: f64 },

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid zone: {0}")]
    InvalidZone(String),

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("out-of-order frame: t={got} is not after t={last}")]
    OutOfOrder { last: f64, got: f64 },

    #[error("unknown object {0}")]
    UnknownObject(ObjectId),

    #[error("roc auc needs at least one positive and one negative label")]
    SingleClass,

    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
}

impl Error {
    pub(crate) fn format(line: usize, msg: impl Into<String>) -> Self {
        Error::Format { line, msg: msg.into() }
    }
}
