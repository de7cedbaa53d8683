//! `metrics`: lesion-wise Dice and surface-Dice report for one case.

use std::path::Path;

use pedseg_core::metrics::{LesionReport, REPORT_REGIONS};
use pedseg_core::volume::LabelEncoding;

use crate::error::{CliError, Result};
use crate::io::read_labels;
use crate::manifest::RunContext;

/// Output file name of the evaluation report.
pub const OUTPUT_REPORT: &str = "metrics.json";

pub fn run(ctx: &mut RunContext, pred: &Path, gt: &Path, tolerance_mm: f64) -> Result<()> {
    if !(tolerance_mm.is_finite() && tolerance_mm > 0.0) {
        return Err(CliError::Input(format!(
            "tolerance-mm must be a positive real, got {tolerance_mm}"
        )));
    }

    let pred_volume = read_labels(pred)?;
    ctx.record_input(pred);
    let gt_volume = read_labels(gt)?;
    ctx.record_input(gt);

    let encoding = LabelEncoding::from_config(&ctx.config)?;
    ctx.record("tolerance_mm", tolerance_mm);
    ctx.record("enhancing_label", encoding.enhancing);
    ctx.record("non_enhancing_label", encoding.non_enhancing);
    ctx.record("cystic_label", encoding.cystic);
    ctx.record("edema_label", encoding.edema);

    let report = LesionReport::from_volumes(&pred_volume, &gt_volume, &encoding, tolerance_mm)?;
    ctx.write_json(OUTPUT_REPORT, &report)?;

    println!("{:<8} {:>12} {:>12}", "region", "lesion_dice", "lesion_nsd");
    for region in REPORT_REGIONS {
        let scores = &report.regions[region];
        println!(
            "{:<8} {:>12.4} {:>12.4}",
            region, scores.lesion_wise_dice, scores.lesion_wise_nsd
        );
    }
    println!(
        "{:<8} {:>12.4} {:>12.4}",
        "mean", report.mean_lesion_wise_dice, report.mean_lesion_wise_nsd
    );
    Ok(())
}
