//! Differentiable 3D network building blocks at desk scale: convolutions
//! (standard, depthwise, pointwise, transposed), instance normalization,
//! squeeze-and-excitation attention, stochastic depth, the residual
//! attention block, channel planning with exact parameter accounting,
//! alpha-scaled Gaussian initialization, binary weight snapshots, and a
//! finite-difference gradient verification suite.

pub mod block;
pub mod conv;
pub mod droppath;
pub mod error;
pub mod gradcheck;
pub mod init;
pub mod norm;
pub mod plan;
pub mod se;
pub mod snapshot;
pub mod tensor;

pub use block::{DepthwiseSeparableBlock, ResidualSeBlock};
pub use conv::{Conv3d, ConvKind, ConvSpec};
pub use droppath::Phase;
pub use error::{Error, Result};
pub use norm::InstanceNorm;
pub use plan::ChannelPlan;
pub use se::SeAttention;
pub use tensor::{Shape5, Tensor5};
