use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("parameters are not stationary (spectral radius {0:.6} >= 1)")]
    Nonstationary(f64),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("estimation failed: {0}")]
    Fit(String),

    #[error("negative statistic {value:e} exceeds the round-off allowance")]
    NegativeStatistic { value: f64 },

    #[error("{failed} of {total} replicates failed (limit 5%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("missing cells: {0:?}")]
    MissingCells(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
