use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// Raised when a left inverse of the constraint normals does not exist.
    #[error("{0}")]
    Representation(&'static str),

    /// The secular equation could not be bracketed; the instance is
    /// numerically degenerate and should be re-classified with a larger
    /// multiplicity tolerance.
    #[error("secular equation bracket failure at mu = {mu:e} (f = {value:e})")]
    Bracket { mu: f64, value: f64 },

    #[error("unsupported dimension n = {0} (grid enumeration supports n in {{2, 3}})")]
    UnsupportedDimension(usize),

    #[error("cone contains no unit vector")]
    EmptyCone,

    #[error("invalid measurement model: {0}")]
    InvalidModel(String),

    #[error("reference point is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
