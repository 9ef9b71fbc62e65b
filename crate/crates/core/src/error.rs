use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("column `{0}` has zero variance and cannot be scaled")]
    ZeroVariance(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("density {density:e} at evaluation point is below the underflow floor")]
    NegligibleDensity { density: f64 },

    #[error("EM fit failed: {0}")]
    FitFailed(String),

    #[error("all model fits failed:\n{0}")]
    AllFitsFailed(String),

    #[error("optimisation failed: {0}")]
    Optimisation(String),

    #[error("undefined quantity: {0}")]
    Undefined(String),

    #[error("unsupported schema: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite(_)
                | Error::RankDeficient(_)
                | Error::NegligibleDensity { .. }
                | Error::FitFailed(_)
                | Error::AllFitsFailed(_)
                | Error::Optimisation(_)
                | Error::Undefined(_)
        )
    }
}
