use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed numeric token. Row and column are 1-based.
    #[error("parse error at line {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    /// The requested computation exceeds what this implementation evaluates
    /// exactly. Callers are expected to fall back to a bound.
    #[error("capability exceeded: {0}")]
    Capability(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn is_capability(&self) -> bool {
        matches!(self, Error::Capability(_))
    }
}
