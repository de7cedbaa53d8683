//! Error type for the augmentation crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter range, probability, or flag is out of its valid domain.
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(String),

    /// A paired image and label volume disagree on dimensions.
    #[error("dims mismatch: {0}")]
    DimsMismatch(String),

    /// Failure propagated from volume construction or config parsing.
    #[error(transparent)]
    Core(#[from] pedseg_core::Error),
}
