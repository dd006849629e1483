use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("data error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("insufficient data for {what}: need {needed}, got {got}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("only {found} exceedances beyond the threshold, need at least {required}; widen the threshold")]
    TooFewExceedances { found: usize, required: usize },

    #[error(
        "optimizer did not converge: {message} (best objective {best_value:e} at {best_point:?})"
    )]
    NonConvergence {
        message: String,
        best_point: Vec<f64>,
        best_value: f64,
    },

    #[error("design matrix is rank deficient: regressor `{regressor}` is constant or collinear")]
    RankDeficient { regressor: String },

    #[error("misaligned series: {0}")]
    Misaligned(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
