use thiserror::Error;

use crate::graphex::ValidationReport;

#[derive(Debug, Error)]
pub enum GraphexError {
    #[error("invalid graphex: {0}")]
    Invalid(ValidationReport),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("mismatched spaces: {0}")]
    Mismatch(String),

    #[error("size cap exceeded: {0}")]
    Cap(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GraphexError>;

pub(crate) fn domain(msg: impl Into<String>) -> GraphexError {
    GraphexError::Domain(msg.into())
}

pub(crate) fn precondition(msg: impl Into<String>) -> GraphexError {
    GraphexError::Precondition(msg.into())
}
