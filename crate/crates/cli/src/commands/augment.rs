//! `augment`: apply the stochastic augmentation pipeline to one
//! image/label pair under a per-case random stream.

use std::path::Path;

use pedseg_augment::{augment_case_seeded, AugmentConfig};
use pedseg_core::nifti::{write_nifti_gz, NiftiImage};

use crate::error::Result;
use crate::io::{read_grid, read_labels};
use crate::manifest::RunContext;

/// Output file names of the augmented pair.
pub const OUTPUT_IMAGE: &str = "augmented_image.nii.gz";
pub const OUTPUT_LABELS: &str = "augmented_labels.nii.gz";

pub fn run(ctx: &mut RunContext, image: &Path, labels: &Path, case: u64) -> Result<()> {
    let image_grid = read_grid(image)?;
    ctx.record_input(image);
    let label_volume = read_labels(labels)?;
    ctx.record_input(labels);

    let mut config = AugmentConfig::from_config(&ctx.config)?;
    // All CLI randomness flows from --seed; the config file's own
    // `augment_seed` only matters to library embedders.
    config.seed = ctx.seed;
    ctx.record("augment_seed", config.seed);
    ctx.record("case", case);

    let (augmented_image, augmented_labels) =
        augment_case_seeded(&image_grid, &label_volume, &config, case)?;

    let image_bytes = write_nifti_gz(&NiftiImage::from_voxel_grid(&augmented_image))?;
    ctx.write_bytes(OUTPUT_IMAGE, &image_bytes)?;
    let label_bytes = write_nifti_gz(&NiftiImage::from_label_volume(&augmented_labels))?;
    ctx.write_bytes(OUTPUT_LABELS, &label_bytes)?;

    let foreground = augmented_labels.data().iter().filter(|&&v| v != 0).count();
    println!(
        "augmented case stream {case}: {} foreground voxels in output labels",
        foreground
    );
    Ok(())
}
