use thiserror::Error;

/// Errors produced by the construction and certification routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive semi-definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("matrix is ill-conditioned (smallest eigenvalue {min_eigenvalue:e} below {threshold:e})")]
    IllConditioned { min_eigenvalue: f64, threshold: f64 },

    #[error("Christoffel function vanished at {point:?}")]
    DegenerateChristoffel { point: Vec<f64> },

    #[error("spectrum has zero tail trace beyond truncation {n}")]
    ZeroTail { n: usize },

    #[error("lifted dimension {dim} exceeds the configured cap {cap}")]
    SizeLimit { dim: usize, cap: usize },

    #[error("factorial product for M = {m} overflows 64-bit frequencies; use the big-integer variant")]
    BigIntRequired { m: u64 },

    #[error("design is not exact (mz constant {mz_constant:e})")]
    NonExactDesign { mz_constant: f64 },

    #[error("reduction changed the target by {drift:e}, above tolerance {tol:e}")]
    ReductionDrift { drift: f64, tol: f64 },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {message}")]
    Parse { what: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
