//! Training-time augmentations for 3D medical volumes: axis flips,
//! rotation-plus-scale resampling, additive noise, blur, brightness,
//! contrast, gamma correction, and low-resolution simulation.
//!
//! Each transform is an independent, seedable function over a
//! [`pedseg_core::VoxelGrid`] (images) or [`pedseg_core::LabelVolume`]
//! (segmentations). Geometric transforms separate the random draw from its
//! application so a paired image and label volume can share one draw.
//! [`augment_case`] chains everything into the standard pipeline; given the
//! same config and case number it is bit-reproducible, and distinct cases
//! use independent random streams so a dataset can be augmented in
//! parallel.

pub mod config;
pub mod error;
pub mod intensity;
pub mod spatial;

pub use config::{augment_case, augment_case_seeded, case_rng, AugmentConfig, Range};
pub use error::{Error, Result};
pub use intensity::{brightness, contrast, gamma_correct, gaussian_blur, gaussian_noise};
pub use spatial::{
    affine_grid, affine_labels, draw_affine, draw_flips, flip_grid, flip_labels,
    simulate_low_resolution, AffineDraw, FlipDraw,
};
