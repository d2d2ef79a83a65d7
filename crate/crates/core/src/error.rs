use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Exact-arithmetic routines only cover a bounded multipole range.
    #[error("multipole {ell} outside the supported range 0..={max}")]
    OutOfRange { ell: usize, max: usize },

    #[error("grid band limit {grid} cannot resolve band limit {required}")]
    UnderResolvedGrid { grid: usize, required: usize },

    #[error("rank-deficient harmonic matrix: sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e}")]
    RankDeficient { sigma_min: f64, sigma_max: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
