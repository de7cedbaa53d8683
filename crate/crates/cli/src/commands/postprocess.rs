//! `postprocess`: ratio-based relabeling plus small-component removal.

use std::path::Path;

use pedseg_core::nifti::{write_nifti_gz, NiftiImage};
use pedseg_core::postprocess::{postprocess_pipeline_report, PostprocessConfig};

use crate::error::{CliError, Result};
use crate::io::{read_grid, read_labels};
use crate::manifest::RunContext;

/// Output file name of the refined labelmap.
pub const OUTPUT_LABELS: &str = "postprocessed.nii.gz";
/// Output file name of the change report.
pub const OUTPUT_REPORT: &str = "postprocess_report.json";

pub fn run(ctx: &mut RunContext, seg: &Path, t1ce: &Path, t1: &Path) -> Result<()> {
    let seg_volume = read_labels(seg)?;
    ctx.record_input(seg);
    let t1ce_grid = read_grid(t1ce)?;
    ctx.record_input(t1ce);
    let t1_grid = read_grid(t1)?;
    ctx.record_input(t1);

    if seg_volume.dims() != t1ce_grid.dims() || seg_volume.dims() != t1_grid.dims() {
        return Err(CliError::Input(format!(
            "dims mismatch: seg {:?}, t1ce {:?}, t1 {:?}",
            seg_volume.dims(),
            t1ce_grid.dims(),
            t1_grid.dims()
        )));
    }

    let config = PostprocessConfig::from_config(&ctx.config)?;
    record_config(ctx, &config);

    let (refined, report) =
        postprocess_pipeline_report(&seg_volume, &t1ce_grid, &t1_grid, &config)?;

    let bytes = write_nifti_gz(&NiftiImage::from_label_volume(&refined))?;
    let labels_path = ctx.write_bytes(OUTPUT_LABELS, &bytes)?;
    ctx.write_json(OUTPUT_REPORT, &report)?;

    let removed_groups: usize = report.removed_components_mm3.values().map(Vec::len).sum();
    println!(
        "relabeled {} voxels up, {} down; removed {} components ({} voxels); wrote {}",
        report.relabeled_up,
        report.relabeled_down,
        removed_groups,
        report.removed_voxels,
        labels_path.display()
    );
    Ok(())
}

/// Echoes every setting the pipeline resolved, defaults included, so the
/// manifest alone reproduces the run.
fn record_config(ctx: &mut RunContext, config: &PostprocessConfig) {
    ctx.record("ratio_upper", config.thresholds.upper);
    ctx.record("ratio_lower", config.thresholds.lower);
    ctx.record(
        "exclusion",
        format!(
            "[{}, {}]",
            config.thresholds.exclusion_low, config.thresholds.exclusion_high
        ),
    );
    ctx.record("relabel", config.relabel_enabled);
    let thresholds: Vec<String> = config
        .volume_thresholds
        .iter()
        .map(|(label, mm3)| format!("{label}:{mm3}"))
        .collect();
    ctx.record("volume_thresholds", format!("{{{}}}", thresholds.join(", ")));
    ctx.record("enhancing_label", config.enhancing_label);
    ctx.record("non_enhancing_label", config.non_enhancing_label);
}
