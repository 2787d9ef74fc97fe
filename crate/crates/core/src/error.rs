use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix has a non-finite entry at ({row}, {col})")]
    NotFinite { row: usize, col: usize },

    #[error("matrix is not positive semidefinite (most negative eigenvalue {min_eigenvalue:.6e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("edge ({i}, {j}) is out of range for n = {n}")]
    IndexOutOfRange { i: usize, j: usize, n: usize },

    #[error("edge ({i}, {j}) has negative weight {weight}")]
    NegativeWeight { i: usize, j: usize, weight: f64 },

    #[error("rank {r} is outside 1..={n}")]
    BadRank { r: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("nullspace residual {residual:.3e} exceeds tolerance at reduction step {step}")]
    NumericalNullspaceFailure { step: usize, residual: f64 },

    #[error("sign vector has an entry {value} at index {index} that is not +1 or -1")]
    BadEntries { index: usize, value: f64 },

    #[error("solution rows are not unit norm (residual {residual:.3e})")]
    SubunitState { residual: f64 },

    #[error("argument must be at least 1, got {0}")]
    BadK(usize),

    #[error("dimension p must be at least 1, got {0}")]
    BadP(usize),

    #[error("n = {n} exceeds the enumeration limit {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
