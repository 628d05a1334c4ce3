use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is numerically singular (smallest singular value {smallest:.3e}, largest {largest:.3e})")]
    Rank { smallest: f64, largest: f64 },

    #[error("validation failed: {what} (residual {residual:.3e} exceeds {tol:.1e})")]
    Validation { what: String, residual: f64, tol: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("toy Fock configuration exceeds budget: footprint of {needed} entries, budget is {budget}")]
    Budget { needed: f64, budget: usize },

    #[error("slot granularity mismatch: {0}")]
    Granularity(String),

    #[error("{pointer}: {message}")]
    Parse { pointer: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
