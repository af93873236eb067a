use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CfoError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("time {t} outside [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Rollout state norm exceeded the divergence bound. `completed` counts
    /// the evaluation times successfully recorded before blow-up.
    #[error("rollout diverged at t={t} (state norm {norm:e} > bound {bound:e}) after {completed} recorded states")]
    Diverged {
        t: f64,
        norm: f64,
        bound: f64,
        completed: usize,
    },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
}

pub type Result<T> = std::result::Result<T, CfoError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(CfoError::InvalidArgument(msg.into()))
}
