use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CsgError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// The operation was called in a state that cannot serve it (empty history, missing snapshot, ...).
    #[error("state error: {0}")]
    State(String),
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, CsgError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(CsgError::Domain(msg.into()))
}

pub(crate) fn state<T>(msg: impl Into<String>) -> Result<T> {
    Err(CsgError::State(msg.into()))
}
