use thiserror::Error;

#[derive(Debug, Error)]
pub enum DyadicError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid index: {0}")]
    InvalidIndex(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("shift parameters too deep for grid: i={i}, j={j}, depth={depth}")]
    Depth { i: usize, j: usize, depth: usize },

    #[error("wrong operator kind: {0}")]
    WrongKind(String),

    #[error("invalid operator specification: {0}")]
    Spec(String),

    #[error("coefficient constraint violated: {0}")]
    Constraint(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DyadicError>;
