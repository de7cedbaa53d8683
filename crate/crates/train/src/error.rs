//! Error type for objective, schedule, and optimizer code.

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("epoch {t} is beyond the schedule horizon {horizon}")]
    OutOfHorizon { t: usize, horizon: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Nn(#[from] pedseg_nn::Error),

    #[error(transparent)]
    Core(#[from] pedseg_core::Error),

    #[error("log serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}
