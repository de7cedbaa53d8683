//! Error type shared by the network building blocks.

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor or parameter shapes are inconsistent with the operation.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A backward call received a context from a different forward pass.
    #[error("context mismatch: {0}")]
    ContextMismatch(String),

    /// Channel-plan construction violated the widened-encoder invariant.
    #[error("invalid channel plan: {0}")]
    InvalidPlan(String),

    /// Weight snapshot container is malformed.
    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
