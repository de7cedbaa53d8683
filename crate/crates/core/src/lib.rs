//! Core library for pediatric brain-tumor segmentation tooling: volume and
//! label containers, NIfTI-1 I/O, binary morphology, evaluation metrics,
//! and the label-refinement pipeline with its threshold statistics.

pub mod config;
pub mod error;
pub mod metrics;
pub mod morphology;
pub mod nifti;
pub mod postprocess;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{Dims, LabelEncoding, LabelVolume, Spacing, VoxelGrid};
