use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("numeric range exceeded: {0}")]
    NumericRange(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("vertical drift is zero (or has the wrong sign): {0}")]
    ZeroDrift(String),

    #[error("atom budget of {budget} exceeded at k = {reached_k}")]
    BudgetExceeded { budget: usize, reached_k: usize },

    #[error("polynomial is not Pisot: {0}")]
    NotPisot(String),

    #[error("polynomial is not monic")]
    NotMonic,

    #[error("method not applicable: {0}")]
    MethodMismatch(String),

    #[error("precision budget exceeded: |k| = {k} > {max}")]
    Precision { k: u32, max: u32 },

    #[error("{failed} of {total} samples hit the step cap")]
    StepCap { failed: usize, total: usize },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input rather than by a numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::Degenerate(_)
                | Error::ZeroDrift(_)
                | Error::NotPisot(_)
                | Error::NotMonic
                | Error::MethodMismatch(_)
                | Error::InsufficientSamples(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
