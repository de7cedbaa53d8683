//! Training mathematics for the segmentation network: the composite loss
//! (soft Dice, cross-entropy, boundary distance, false-positive penalty)
//! with analytic gradients, the cosine learning-rate schedule, an SGD
//! optimizer with Nesterov momentum, finite-difference checks for every
//! loss term, and a synthetic end-to-end training exercise.

pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod optim;
pub mod schedule;
pub mod toy;

pub use error::{Error, Result};
pub use loss::{composite_loss, CompositeLoss, LossConfig};
pub use optim::OptimizerState;
pub use schedule::cosine_lr;
pub use toy::{run_toy, ToyConfig, ToyOutcome};
