use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown component reference `{0}`")]
    UnknownReference(String),
    #[error("duplicate component name `{0}`")]
    DuplicateComponent(String),
    #[error("missing DIEAREA")]
    MissingDieArea,
    #[error("component `{0}` is not placed")]
    Unplaced(String),
    #[error("no design header")]
    NoDesignHeader,
    #[error("line {line}: schema violation: {message}")]
    Schema { line: usize, message: String },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse error class, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Validation,
    Numeric,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Shape { .. } | Error::NonFinite(_) => ErrorClass::Numeric,
            Error::InvalidArgument(_) | Error::Config(_) => ErrorClass::Usage,
            _ => ErrorClass::Validation,
        }
    }
}
