//! `ratio-stats` and `roc`: cohort-level statistics of the T1CE/T1
//! intensity ratio under the enhancing and non-enhancing classes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use pedseg_core::postprocess::{nearest_rank_percentile, roc_curve, PostprocessConfig};

use crate::cohort::{load_case_ratios, read_cohort, CaseLayout, CaseRatios};
use crate::error::{CliError, Result};
use crate::manifest::RunContext;

/// Output file name of the percentile report.
pub const OUTPUT_STATS: &str = "ratio_stats.json";
/// Output file names of the ROC artifacts.
pub const OUTPUT_ROC_CSV: &str = "roc.csv";
pub const OUTPUT_ROC_JSON: &str = "roc.json";

#[derive(Debug, Serialize)]
struct CaseStats {
    enhancing_percentile_value: f64,
    non_enhancing_percentile_value: f64,
    enhancing_voxels: usize,
    non_enhancing_voxels: usize,
}

#[derive(Debug, Serialize)]
struct PooledStats {
    /// Suggested relabeling threshold read from the pooled non-enhancing
    /// distribution (voxels above it look enhancing).
    suggested_upper: f64,
    /// Suggested threshold from the pooled enhancing distribution (voxels
    /// below it look non-enhancing).
    suggested_lower: f64,
    enhancing_voxels: usize,
    non_enhancing_voxels: usize,
}

#[derive(Debug, Serialize)]
struct RatioStatsReport {
    enhancing_percentile: f64,
    non_enhancing_percentile: f64,
    cases: BTreeMap<String, CaseStats>,
    pooled: PooledStats,
}

fn validate_percentile(name: &str, value: f64) -> Result<()> {
    if !(value > 0.0 && value <= 100.0) {
        return Err(CliError::Input(format!(
            "{name} must be in (0, 100], got {value}"
        )));
    }
    Ok(())
}

/// Shared cohort loading: parse the manifest, record the resolved layout,
/// and extract per-case in-band ratios on the worker pool.
fn load_cohort(ctx: &mut RunContext, cohort: &Path) -> Result<Vec<CaseRatios>> {
    let layout = CaseLayout::from_config(&ctx.config);
    let pipeline = PostprocessConfig::from_config(&ctx.config)?;
    ctx.record("t1_filename", &layout.t1);
    ctx.record("t1ce_filename", &layout.t1ce);
    ctx.record("seg_filename", &layout.seg);
    ctx.record(
        "exclusion",
        format!(
            "[{}, {}]",
            pipeline.thresholds.exclusion_low, pipeline.thresholds.exclusion_high
        ),
    );
    ctx.record("enhancing_label", pipeline.enhancing_label);
    ctx.record("non_enhancing_label", pipeline.non_enhancing_label);

    let cases = read_cohort(cohort)?;
    ctx.record_input(cohort);
    load_case_ratios(&cases, &layout, &pipeline, ctx.jobs)
}

pub fn run_stats(
    ctx: &mut RunContext,
    cohort: &Path,
    enhancing_percentile: f64,
    non_enhancing_percentile: f64,
) -> Result<()> {
    validate_percentile("enhancing-percentile", enhancing_percentile)?;
    validate_percentile("non-enhancing-percentile", non_enhancing_percentile)?;
    ctx.record("enhancing_percentile", enhancing_percentile);
    ctx.record("non_enhancing_percentile", non_enhancing_percentile);

    let loaded = load_cohort(ctx, cohort)?;

    let mut cases = BTreeMap::new();
    let mut pooled_enhancing = Vec::new();
    let mut pooled_non_enhancing = Vec::new();
    for case in &loaded {
        let stats = CaseStats {
            enhancing_percentile_value: nearest_rank_percentile(
                &case.enhancing,
                enhancing_percentile,
            )
            .map_err(|e| CliError::Input(format!("case {}: {e}", case.id)))?,
            non_enhancing_percentile_value: nearest_rank_percentile(
                &case.non_enhancing,
                non_enhancing_percentile,
            )
            .map_err(|e| CliError::Input(format!("case {}: {e}", case.id)))?,
            enhancing_voxels: case.enhancing.len(),
            non_enhancing_voxels: case.non_enhancing.len(),
        };
        cases.insert(case.id.clone(), stats);
        pooled_enhancing.extend_from_slice(&case.enhancing);
        pooled_non_enhancing.extend_from_slice(&case.non_enhancing);
    }

    let pooled = PooledStats {
        suggested_upper: nearest_rank_percentile(&pooled_non_enhancing, non_enhancing_percentile)?,
        suggested_lower: nearest_rank_percentile(&pooled_enhancing, enhancing_percentile)?,
        enhancing_voxels: pooled_enhancing.len(),
        non_enhancing_voxels: pooled_non_enhancing.len(),
    };
    println!(
        "pooled over {} cases: suggested_upper = {} (p{} of non-enhancing), suggested_lower = {} (p{} of enhancing)",
        cases.len(),
        pooled.suggested_upper,
        non_enhancing_percentile,
        pooled.suggested_lower,
        enhancing_percentile
    );

    let report = RatioStatsReport {
        enhancing_percentile,
        non_enhancing_percentile,
        cases,
        pooled,
    };
    ctx.write_json(OUTPUT_STATS, &report)?;
    Ok(())
}

pub fn run_roc(ctx: &mut RunContext, cohort: &Path) -> Result<()> {
    let loaded = load_cohort(ctx, cohort)?;

    // Pool in id-sorted case order; enhancing voxels are the positives.
    let mut samples = Vec::new();
    for case in &loaded {
        samples.extend(case.enhancing.iter().map(|&r| (r, true)));
        samples.extend(case.non_enhancing.iter().map(|&r| (r, false)));
    }
    let positives = loaded.iter().map(|c| c.enhancing.len()).sum::<usize>();
    let negatives = samples.len() - positives;

    let curve = roc_curve(&samples)?;
    ctx.write_text(OUTPUT_ROC_CSV, &curve.to_csv())?;

    let mut summary = curve.summary_json();
    let object = summary.as_object_mut().expect("summary is an object");
    object.insert("case_count".to_string(), loaded.len().into());
    object.insert("positive_samples".to_string(), positives.into());
    object.insert("negative_samples".to_string(), negatives.into());
    ctx.write_json(OUTPUT_ROC_JSON, &summary)?;

    println!(
        "AUC = {} over {} positives / {} negatives from {} cases",
        curve.auc,
        positives,
        negatives,
        loaded.len()
    );
    Ok(())
}
