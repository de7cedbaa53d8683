//! Cohort manifests and parallel case loading.
//!
//! A cohort manifest is a plain text file naming one case directory per
//! line (blank lines and `#` comments are skipped; relative entries resolve
//! against the manifest's own directory). Each case directory holds one
//! file per modality, named by the layout conventions — `t1.nii.gz`,
//! `t1ce.nii.gz`, `seg.nii.gz` unless the config overrides them.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use pedseg_core::config::ConfigMap;
use pedseg_core::postprocess::{in_band_ratios, t1ce_t1_ratio, PostprocessConfig};

use crate::error::{CliError, Result};
use crate::io::{read_grid, read_labels};

/// File names of the per-case modalities.
#[derive(Debug, Clone)]
pub struct CaseLayout {
    pub t1: String,
    pub t1ce: String,
    pub seg: String,
}

impl Default for CaseLayout {
    fn default() -> Self {
        CaseLayout {
            t1: "t1.nii.gz".to_string(),
            t1ce: "t1ce.nii.gz".to_string(),
            seg: "seg.nii.gz".to_string(),
        }
    }
}

impl CaseLayout {
    /// Config keys: `t1_filename`, `t1ce_filename`, `seg_filename`.
    pub fn from_config(config: &ConfigMap) -> CaseLayout {
        let defaults = CaseLayout::default();
        CaseLayout {
            t1: config
                .get_str("t1_filename")
                .map_or(defaults.t1, str::to_string),
            t1ce: config
                .get_str("t1ce_filename")
                .map_or(defaults.t1ce, str::to_string),
            seg: config
                .get_str("seg_filename")
                .map_or(defaults.seg, str::to_string),
        }
    }
}

/// One cohort entry: the manifest line is the case id.
#[derive(Debug, Clone)]
pub struct CohortCase {
    pub id: String,
    pub dir: PathBuf,
}

/// Parses a cohort manifest and returns its cases sorted by id.
pub fn read_cohort(path: &Path) -> Result<Vec<CohortCase>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut cases = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        cases.push(CohortCase {
            id: line.to_string(),
            dir: base.join(line),
        });
    }
    if cases.is_empty() {
        return Err(CliError::Input(format!(
            "empty cohort: no cases listed in {}",
            path.display()
        )));
    }
    cases.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(cases)
}

/// In-band T1CE/T1 ratio values of one case, split by class.
#[derive(Debug, Clone)]
pub struct CaseRatios {
    pub id: String,
    pub enhancing: Vec<f64>,
    pub non_enhancing: Vec<f64>,
}

/// Loads every case and extracts its in-band ratio values, in parallel over
/// cases. Results keep the id-sorted case order and any failure names the
/// first offending case in that order; a case with no in-band voxels for
/// either class is an error.
pub fn load_case_ratios(
    cases: &[CohortCase],
    layout: &CaseLayout,
    pipeline: &PostprocessConfig,
    jobs: usize,
) -> Result<Vec<CaseRatios>> {
    let extract = |case: &CohortCase| -> Result<CaseRatios> {
        let in_case = |e: CliError| CliError::Input(format!("case {}: {e}", case.id));
        let t1 = read_grid(&case.dir.join(&layout.t1)).map_err(in_case)?;
        let t1ce = read_grid(&case.dir.join(&layout.t1ce)).map_err(in_case)?;
        let seg = read_labels(&case.dir.join(&layout.seg)).map_err(in_case)?;
        let ratio = t1ce_t1_ratio(&t1ce, &t1)
            .map_err(|e| CliError::Input(format!("case {}: {e}", case.id)))?;

        let class_values = |label: u8| -> Result<Vec<f64>> {
            let values = in_band_ratios(&ratio, &seg, label, &pipeline.thresholds)
                .map_err(|e| CliError::Input(format!("case {}: {e}", case.id)))?;
            if values.is_empty() {
                return Err(CliError::Input(format!(
                    "case {}: {}",
                    case.id,
                    pedseg_core::Error::EmptyClass(label)
                )));
            }
            Ok(values)
        };
        let enhancing = class_values(pipeline.enhancing_label)?;
        let non_enhancing = class_values(pipeline.non_enhancing_label)?;
        Ok(CaseRatios {
            id: case.id.clone(),
            enhancing,
            non_enhancing,
        })
    };

    let results: Vec<Result<CaseRatios>> =
        run_parallel(jobs, || cases.par_iter().map(extract).collect())?;
    // Sequential unwrap keeps the reported error deterministic (first case
    // in sorted order) no matter how the pool interleaved the work.
    results.into_iter().collect()
}

/// Runs `work` on the global pool (`jobs` = 0) or on a dedicated pool with
/// the requested thread count.
pub fn run_parallel<T: Send>(jobs: usize, work: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs == 0 {
        return Ok(work());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Input(format!("jobs: {e}")))?;
    Ok(pool.install(work))
}
