//! Segmentation refinement: intensity-ratio relabeling between the
//! enhancing and non-enhancing classes, small-component removal, and the
//! ratio statistics / ROC analysis used to pick the thresholds.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::morphology::remove_small_components_report;
use crate::volume::{LabelVolume, VoxelGrid};

/// Denominator magnitudes below this mark the ratio voxel as undefined.
pub const DENOMINATOR_GUARD: f64 = 1e-6;

/// Value stored at undefined ratio voxels. Finite so the grid invariant
/// holds, but excluded from statistics and from relabeling by an exact
/// equality check; real ratios cannot reach it because the guard bounds
/// them well below this magnitude.
pub const RATIO_SENTINEL: f64 = f64::MAX;

/// Thresholds steering ratio-based relabeling and its statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioThresholds {
    /// Non-enhancing voxels with ratio strictly above this become enhancing.
    pub upper: f64,
    /// Enhancing voxels with ratio strictly below this become non-enhancing.
    pub lower: f64,
    /// Ratios outside [exclusion_low, exclusion_high] are dropped from
    /// percentile statistics as outliers.
    pub exclusion_low: f64,
    pub exclusion_high: f64,
}

impl RatioThresholds {
    pub fn new(upper: f64, lower: f64, exclusion_low: f64, exclusion_high: f64) -> Result<Self> {
        if !(lower > 0.0 && upper > lower) {
            return Err(Error::Config(format!(
                "ratio thresholds must satisfy 0 < lower < upper, got lower={lower}, upper={upper}"
            )));
        }
        let band_ordered = exclusion_low < exclusion_high;
        if !band_ordered {
            return Err(Error::Config(format!(
                "exclusion band must be ordered, got [{exclusion_low}, {exclusion_high}]"
            )));
        }
        Ok(RatioThresholds {
            upper,
            lower,
            exclusion_low,
            exclusion_high,
        })
    }
}

impl Default for RatioThresholds {
    /// The published operating point: relabel upward above 1.388, downward
    /// below 0.766, with outlier trimming outside [0.2, 5.0].
    fn default() -> Self {
        RatioThresholds {
            upper: 1.388,
            lower: 0.766,
            exclusion_low: 0.2,
            exclusion_high: 5.0,
        }
    }
}

/// Voxel-wise T1CE/T1 intensity ratio on z-score-normalized inputs.
///
/// Denominators within the guard band produce [`RATIO_SENTINEL`], which the
/// statistics and relabeling steps ignore.
pub fn t1ce_t1_ratio(t1ce: &VoxelGrid, t1: &VoxelGrid) -> Result<VoxelGrid> {
    if t1ce.dims() != t1.dims() {
        return Err(Error::DimsMismatch(format!(
            "ratio: t1ce dims {:?}, t1 dims {:?}",
            t1ce.dims(),
            t1.dims()
        )));
    }
    let data: Vec<f64> = t1ce
        .data()
        .iter()
        .zip(t1.data())
        .map(|(&num, &den)| {
            if den.abs() < DENOMINATOR_GUARD {
                RATIO_SENTINEL
            } else {
                num / den
            }
        })
        .collect();
    VoxelGrid::new(t1ce.dims(), t1ce.spacing(), data)
}

/// In-band ratio values under one label: sentinel voxels and ratios outside
/// the exclusion band never participate. The returned order follows the
/// linear voxel order; callers pooling several volumes can concatenate
/// freely since the percentile is order-invariant.
pub fn in_band_ratios(
    ratio: &VoxelGrid,
    labels: &LabelVolume,
    label: u8,
    thresholds: &RatioThresholds,
) -> Result<Vec<f64>> {
    if ratio.dims() != labels.dims() {
        return Err(Error::DimsMismatch(format!(
            "ratio statistics: ratio dims {:?}, labels dims {:?}",
            ratio.dims(),
            labels.dims()
        )));
    }
    Ok(ratio
        .data()
        .iter()
        .zip(labels.data())
        .filter(|&(&r, &l)| {
            l == label
                && r != RATIO_SENTINEL
                && r >= thresholds.exclusion_low
                && r <= thresholds.exclusion_high
        })
        .map(|(&r, _)| r)
        .collect())
}

/// Nearest-rank percentile of an unordered value set: `percentile` is on
/// the 0–100 scale and the result is the ceil(p/100 · n)-th smallest value.
pub fn nearest_rank_percentile(values: &[f64], percentile: f64) -> Result<f64> {
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(Error::Config(format!(
            "percentile must be in (0, 100], got {percentile}"
        )));
    }
    if values.is_empty() {
        return Err(Error::Config(
            "percentile of an empty value set".to_string(),
        ));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let rank = (percentile / 100.0 * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.max(1) - 1])
}

/// Nearest-rank percentile of the in-band ratio values under one label.
///
/// `percentile` is on the 0–100 scale; the result is the ceil(p/100 · n)-th
/// smallest in-band value. Sentinel voxels and ratios outside the exclusion
/// band never participate.
pub fn ratio_percentile(
    ratio: &VoxelGrid,
    labels: &LabelVolume,
    label: u8,
    thresholds: &RatioThresholds,
    percentile: f64,
) -> Result<f64> {
    let values = in_band_ratios(ratio, labels, label, thresholds)?;
    if values.is_empty() {
        return Err(Error::EmptyClass(label));
    }
    nearest_rank_percentile(&values, percentile)
}

/// Percentile summary of the ratio under the enhancing and non-enhancing
/// classes — the statistics from which the relabeling thresholds are read.
pub fn ratio_statistics(
    ratio: &VoxelGrid,
    labels: &LabelVolume,
    thresholds: &RatioThresholds,
    enhancing_label: u8,
    non_enhancing_label: u8,
    enhancing_percentile: f64,
    non_enhancing_percentile: f64,
) -> Result<(f64, f64)> {
    let p_et = ratio_percentile(ratio, labels, enhancing_label, thresholds, enhancing_percentile)?;
    let p_net = ratio_percentile(
        ratio,
        labels,
        non_enhancing_label,
        thresholds,
        non_enhancing_percentile,
    )?;
    Ok((p_et, p_net))
}

/// Reassigns enhancing/non-enhancing labels from the intensity ratio in a
/// single pass over the original labels (no cascading): non-enhancing
/// voxels with ratio strictly above `upper` become enhancing, enhancing
/// voxels strictly below `lower` become non-enhancing.
pub fn relabel_by_ratio(
    labels: &LabelVolume,
    ratio: &VoxelGrid,
    thresholds: &RatioThresholds,
    enhancing_label: u8,
    non_enhancing_label: u8,
) -> Result<LabelVolume> {
    if ratio.dims() != labels.dims() {
        return Err(Error::DimsMismatch(format!(
            "relabel: labels dims {:?}, ratio dims {:?}",
            labels.dims(),
            ratio.dims()
        )));
    }
    let mut out = labels.clone();
    for (idx, &r) in ratio.data().iter().enumerate() {
        if r == RATIO_SENTINEL {
            continue;
        }
        let l = labels.data()[idx];
        if l == non_enhancing_label && r > thresholds.upper {
            out.data_mut()[idx] = enhancing_label;
        } else if l == enhancing_label && r < thresholds.lower {
            out.data_mut()[idx] = non_enhancing_label;
        }
    }
    Ok(out)
}

/// One operating point of the threshold sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// ROC curve of a score against a binary class, positives scored high.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// Sweeps classification thresholds over the distinct score values,
/// treating `true` (enhancing) as the positive class and classifying a
/// sample positive when its score is ≥ the threshold. The first stored
/// point is the all-negative classifier at threshold +∞.
pub fn roc_curve(samples: &[(f64, bool)]) -> Result<RocCurve> {
    let positives = samples.iter().filter(|&&(_, c)| c).count();
    let negatives = samples.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass);
    }

    let mut sorted: Vec<(f64, bool)> = samples.to_vec();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        tpr: 0.0,
        fpr: 0.0,
    }];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0usize;
    while i < sorted.len() {
        let threshold = sorted[i].0;
        // Consume every sample tied at this score before emitting a point.
        while i < sorted.len() && sorted[i].0 == threshold {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            tpr: tp as f64 / positives as f64,
            fpr: fp as f64 / negatives as f64,
        });
    }

    let mut auc = 0.0;
    for pair in points.windows(2) {
        auc += (pair[1].fpr - pair[0].fpr) * (pair[1].tpr + pair[0].tpr) / 2.0;
    }

    Ok(RocCurve { points, auc })
}

impl RocCurve {
    /// CSV dump, one threshold per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.threshold, p.fpr, p.tpr));
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "auc": self.auc,
            "point_count": self.points.len(),
        })
    }
}

/// Settings for the full refinement pipeline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PostprocessConfig {
    pub thresholds: RatioThresholds,
    /// Skips the ratio step entirely when false (a neutral config together
    /// with an empty `volume_thresholds` map makes the pipeline the
    /// identity).
    pub relabel_enabled: bool,
    /// Minimum component volume (mm³) per label; labels absent from the map
    /// are never filtered.
    pub volume_thresholds: BTreeMap<u8, f64>,
    pub enhancing_label: u8,
    pub non_enhancing_label: u8,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        PostprocessConfig {
            thresholds: RatioThresholds::default(),
            relabel_enabled: true,
            volume_thresholds: BTreeMap::from([(1u8, 160.0), (3u8, 50.0)]),
            enhancing_label: 1,
            non_enhancing_label: 2,
        }
    }
}

/// What the pipeline changed: voxel moves per direction and the volumes of
/// every removed component group, per label.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PostprocessReport {
    /// Voxels moved non-enhancing → enhancing (ratio above `upper`).
    pub relabeled_up: usize,
    /// Voxels moved enhancing → non-enhancing (ratio below `lower`).
    pub relabeled_down: usize,
    /// Removed group volumes in mm³, keyed by decimal label.
    pub removed_components_mm3: BTreeMap<String, Vec<f64>>,
    pub removed_voxels: usize,
}

/// Applies ratio relabeling, then small-component removal, in that order —
/// so relabeled enhancing specks are still subject to the volume filter.
pub fn postprocess_pipeline(
    labels: &LabelVolume,
    t1ce: &VoxelGrid,
    t1: &VoxelGrid,
    config: &PostprocessConfig,
) -> Result<LabelVolume> {
    postprocess_pipeline_report(labels, t1ce, t1, config).map(|(v, _)| v)
}

/// [`postprocess_pipeline`] plus a change-report.
pub fn postprocess_pipeline_report(
    labels: &LabelVolume,
    t1ce: &VoxelGrid,
    t1: &VoxelGrid,
    config: &PostprocessConfig,
) -> Result<(LabelVolume, PostprocessReport)> {
    if labels.dims() != t1ce.dims() {
        return Err(Error::DimsMismatch(format!(
            "pipeline: labels dims {:?}, t1ce dims {:?}",
            labels.dims(),
            t1ce.dims()
        )));
    }
    let mut report = PostprocessReport::default();

    let relabeled = if config.relabel_enabled {
        let ratio = t1ce_t1_ratio(t1ce, t1)?;
        let relabeled = relabel_by_ratio(
            labels,
            &ratio,
            &config.thresholds,
            config.enhancing_label,
            config.non_enhancing_label,
        )?;
        for (before, after) in labels.data().iter().zip(relabeled.data()) {
            if before != after {
                if *after == config.enhancing_label {
                    report.relabeled_up += 1;
                } else {
                    report.relabeled_down += 1;
                }
            }
        }
        relabeled
    } else {
        labels.clone()
    };

    let (cleaned, removed) = remove_small_components_report(&relabeled, &config.volume_thresholds);
    report.removed_voxels = relabeled
        .data()
        .iter()
        .zip(cleaned.data())
        .filter(|(b, a)| b != a)
        .count();
    report.removed_components_mm3 = removed
        .into_iter()
        .map(|(label, vols)| (label.to_string(), vols))
        .collect();

    Ok((cleaned, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Dims, Spacing};
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_from(values: Vec<f64>, nx: usize, ny: usize, nz: usize) -> VoxelGrid {
        VoxelGrid::new(
            Dims::new(nx, ny, nz).unwrap(),
            Spacing::isotropic(1.0).unwrap(),
            values,
        )
        .unwrap()
    }

    fn labels_from(values: Vec<u8>, nx: usize, ny: usize, nz: usize) -> LabelVolume {
        LabelVolume::new(
            Dims::new(nx, ny, nz).unwrap(),
            Spacing::isotropic(1.0).unwrap(),
            values,
        )
        .unwrap()
    }

    #[test]
    fn ratio_of_identical_grids_is_one() {
        let g = grid_from(vec![0.5, -1.0, 2.0, 3.5], 4, 1, 1);
        let r = t1ce_t1_ratio(&g, &g).unwrap();
        assert!(r.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn ratio_division_is_exact() {
        let t1ce = grid_from(vec![2.776], 1, 1, 1);
        let t1 = grid_from(vec![2.0], 1, 1, 1);
        let r = t1ce_t1_ratio(&t1ce, &t1).unwrap();
        assert_eq!(r.data()[0], 1.388);
    }

    #[test]
    fn guard_band_produces_sentinel() {
        let t1ce = grid_from(vec![1.0, 1.0, 1.0], 3, 1, 1);
        let t1 = grid_from(vec![0.0, 5e-7, -5e-7], 3, 1, 1);
        let r = t1ce_t1_ratio(&t1ce, &t1).unwrap();
        assert!(r.data().iter().all(|&v| v == RATIO_SENTINEL));
    }

    #[test]
    fn sentinel_never_relabels() {
        let labels = labels_from(vec![2, 1], 2, 1, 1);
        let ratio = grid_from(vec![RATIO_SENTINEL, RATIO_SENTINEL], 2, 1, 1);
        let th = RatioThresholds::default();
        let out = relabel_by_ratio(&labels, &ratio, &th, 1, 2).unwrap();
        // The sentinel exceeds `upper` numerically but must not relabel.
        assert_eq!(out.data(), labels.data());
    }

    #[test]
    fn percentile_of_one_to_hundred() {
        let values: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        let ratio = grid_from(values, 100, 1, 1);
        let labels = labels_from(vec![2u8; 100], 100, 1, 1);
        let th = RatioThresholds::new(1.388, 0.766, 0.0, 1000.0).unwrap();
        let p95 = ratio_percentile(&ratio, &labels, 2, &th, 95.0).unwrap();
        assert_eq!(p95, 95.0);
        let p5 = ratio_percentile(&ratio, &labels, 2, &th, 5.0).unwrap();
        assert_eq!(p5, 5.0);
    }

    #[test]
    fn all_out_of_band_is_empty_class() {
        let ratio = grid_from(vec![0.1, 6.0, 0.15, 9.0], 4, 1, 1);
        let labels = labels_from(vec![2, 2, 1, 1], 4, 1, 1);
        let th = RatioThresholds::default();
        assert!(matches!(
            ratio_percentile(&ratio, &labels, 2, &th, 95.0),
            Err(Error::EmptyClass(2))
        ));
        assert!(matches!(
            ratio_percentile(&ratio, &labels, 1, &th, 5.0),
            Err(Error::EmptyClass(1))
        ));
    }

    #[test]
    fn single_in_band_value_is_every_percentile() {
        let ratio = grid_from(vec![1.234, 99.0], 2, 1, 1);
        let labels = labels_from(vec![2, 2], 2, 1, 1);
        let th = RatioThresholds::default();
        for p in [1.0, 5.0, 50.0, 95.0, 100.0] {
            assert_eq!(ratio_percentile(&ratio, &labels, 2, &th, p).unwrap(), 1.234);
        }
    }

    #[test]
    fn nearest_rank_percentile_rank_edges() {
        let values = vec![30.0, 10.0, 20.0];
        assert_eq!(nearest_rank_percentile(&values, 100.0).unwrap(), 30.0);
        // ceil(0.01/100 · 3) = 1 → the minimum.
        assert_eq!(nearest_rank_percentile(&values, 0.01).unwrap(), 10.0);
        // ceil(50/100 · 3) = 2 → the median.
        assert_eq!(nearest_rank_percentile(&values, 50.0).unwrap(), 20.0);
    }

    #[test]
    fn nearest_rank_percentile_rejects_bad_inputs() {
        assert!(matches!(
            nearest_rank_percentile(&[], 50.0),
            Err(Error::Config(_))
        ));
        for p in [0.0, -1.0, 100.5, f64::NAN] {
            assert!(matches!(
                nearest_rank_percentile(&[1.0], p),
                Err(Error::Config(_))
            ));
        }
    }

    #[test]
    fn in_band_ratios_filters_band_and_label() {
        let ratio = grid_from(vec![0.1, 1.0, RATIO_SENTINEL, 5.0, 5.1, 2.0], 6, 1, 1);
        let labels = labels_from(vec![2, 2, 2, 2, 2, 1], 6, 1, 1);
        let th = RatioThresholds::default();
        // Band edges are inclusive; the sentinel and out-of-band values drop.
        assert_eq!(in_band_ratios(&ratio, &labels, 2, &th).unwrap(), vec![1.0, 5.0]);
        assert_eq!(in_band_ratios(&ratio, &labels, 1, &th).unwrap(), vec![2.0]);
        assert!(in_band_ratios(&ratio, &labels, 3, &th).unwrap().is_empty());
    }

    #[test]
    fn relabel_moves_mass_both_directions() {
        let labels = labels_from(vec![2, 1, 1, 2, 0, 3, 4, 1], 8, 1, 1);
        let ratio = grid_from(vec![1.5, 0.5, 1.0, 1.388, 2.0, 2.0, 0.1, 0.766], 8, 1, 1);
        let th = RatioThresholds::default();
        let out = relabel_by_ratio(&labels, &ratio, &th, 1, 2).unwrap();

        assert_eq!(out.data()[0], 1, "ratio 1.5 > 1.388 lifts label 2 to 1");
        assert_eq!(out.data()[1], 2, "ratio 0.5 < 0.766 drops label 1 to 2");
        assert_eq!(out.data()[2], 1, "ratio between thresholds is unchanged");
        assert_eq!(out.data()[3], 2, "exactly 1.388 is not 'exceeded'");
        assert_eq!(out.data()[4], 0, "background untouched");
        assert_eq!(out.data()[5], 3, "other classes untouched");
        assert_eq!(out.data()[6], 4, "other classes untouched");
        assert_eq!(out.data()[7], 1, "exactly 0.766 has not 'fallen below'");
    }

    #[test]
    fn relabel_conserves_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let th = RatioThresholds::default();
        for _ in 0..25 {
            let n = 64;
            let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=4)).collect();
            let ratio: Vec<f64> = (0..n)
                .map(|_| {
                    if rng.gen_bool(0.1) {
                        RATIO_SENTINEL
                    } else {
                        rng.gen_range(-1.0..6.0)
                    }
                })
                .collect();
            let lv = labels_from(labels.clone(), 4, 4, 4);
            let rg = grid_from(ratio, 4, 4, 4);
            let out = relabel_by_ratio(&lv, &rg, &th, 1, 2).unwrap();

            let count = |data: &[u8], l: u8| data.iter().filter(|&&v| v == l).count();
            let et_net_before = count(&labels, 1) + count(&labels, 2);
            let et_net_after = count(out.data(), 1) + count(out.data(), 2);
            assert_eq!(et_net_before, et_net_after);
            for other in [0u8, 3, 4] {
                // Unaffected labels keep exactly their voxel positions.
                for (&was, &now) in labels.iter().zip(out.data()) {
                    assert_eq!(was == other, now == other);
                }
            }
        }
    }

    #[test]
    fn roc_two_sample_curve() {
        let curve = roc_curve(&[(2.0, true), (1.0, false)]).unwrap();
        assert_eq!(curve.auc, 1.0);
        assert_eq!(curve.points.len(), 3);
        assert_eq!(curve.points[0].threshold, f64::INFINITY);
        assert_eq!((curve.points[1].fpr, curve.points[1].tpr), (0.0, 1.0));
        assert_eq!((curve.points[2].fpr, curve.points[2].tpr), (1.0, 1.0));
    }

    #[test]
    fn roc_separable_scores_have_unit_auc() {
        let mut samples = Vec::new();
        for i in 0..50 {
            samples.push((10.0 + i as f64, true));
            samples.push((-10.0 - i as f64, false));
        }
        assert_eq!(roc_curve(&samples).unwrap().auc, 1.0);
    }

    #[test]
    fn roc_shuffled_labels_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let n = 4000;
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mut classes: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        classes.shuffle(&mut rng);
        let samples: Vec<(f64, bool)> = scores.into_iter().zip(classes).collect();
        let auc = roc_curve(&samples).unwrap().auc;
        assert!((auc - 0.5).abs() < 0.05, "auc {auc} too far from chance");
    }

    #[test]
    fn roc_single_class_rejected() {
        assert!(matches!(
            roc_curve(&[(1.0, true), (2.0, true)]),
            Err(Error::SingleClass)
        ));
        assert!(matches!(roc_curve(&[]), Err(Error::SingleClass)));
    }

    #[test]
    fn roc_auc_invariant_under_monotone_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let samples: Vec<(f64, bool)> = (0..200)
            .map(|_| (rng.gen_range(-3.0..3.0), rng.gen_bool(0.4)))
            .collect();
        let base = roc_curve(&samples).unwrap();
        let transformed: Vec<(f64, bool)> = samples
            .iter()
            .map(|&(s, c)| (s.exp(), c)) // strictly increasing
            .collect();
        let mapped = roc_curve(&transformed).unwrap();
        assert_eq!(base.auc, mapped.auc, "auc must be bit-identical");
        for (a, b) in base.points.iter().zip(&mapped.points) {
            assert_eq!((a.fpr, a.tpr), (b.fpr, b.tpr));
        }
    }

    #[test]
    fn roc_monotone_along_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let samples: Vec<(f64, bool)> = (0..300)
            .map(|_| (rng.gen_range(0.0..1.0), rng.gen_bool(0.5)))
            .collect();
        let curve = roc_curve(&samples).unwrap();
        for pair in curve.points.windows(2) {
            assert!(pair[1].fpr >= pair[0].fpr);
            assert!(pair[1].tpr >= pair[0].tpr);
            assert!(pair[1].threshold < pair[0].threshold);
        }
        let last = curve.points.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    }

    #[test]
    fn pipeline_ignores_volume_without_relevant_labels() {
        let d = Dims::new(4, 4, 4).unwrap();
        let s = Spacing::isotropic(2.0).unwrap();
        let mut labels = LabelVolume::zeros(d, s);
        labels.set(1, 1, 1, 4);
        let t1ce = VoxelGrid::new(d, s, vec![2.0; d.len()]).unwrap();
        let t1 = VoxelGrid::new(d, s, vec![1.0; d.len()]).unwrap();
        let out = postprocess_pipeline(&labels, &t1ce, &t1, &PostprocessConfig::default()).unwrap();
        assert_eq!(out, labels);
    }

    #[test]
    fn pipeline_relabels_then_keeps_large_component() {
        // 25 voxels of label 2 at 8 mm³ each: 200 mm³. Ratio 2.0 exceeds the
        // upper threshold, so they become label 1 and survive the 160 mm³
        // filter.
        let d = Dims::new(5, 5, 4).unwrap();
        let s = Spacing::isotropic(2.0).unwrap();
        let mut labels = LabelVolume::zeros(d, s);
        for y in 0..5 {
            for x in 0..5 {
                labels.set(x, y, 0, 2);
            }
        }
        let t1ce = VoxelGrid::new(d, s, vec![2.0; d.len()]).unwrap();
        let t1 = VoxelGrid::new(d, s, vec![1.0; d.len()]).unwrap();
        let out = postprocess_pipeline(&labels, &t1ce, &t1, &PostprocessConfig::default()).unwrap();
        assert_eq!(out.data().iter().filter(|&&v| v == 1).count(), 25);
        assert!(out.data().iter().all(|&v| v != 2));
    }

    #[test]
    fn pipeline_removes_small_speck_with_inband_ratio() {
        // A single 8 mm³ label-1 voxel whose ratio sits between the
        // thresholds: untouched by relabeling, then dropped by the filter.
        let d = Dims::new(4, 4, 4).unwrap();
        let s = Spacing::isotropic(2.0).unwrap();
        let mut labels = LabelVolume::zeros(d, s);
        labels.set(2, 2, 2, 1);
        let t1ce = VoxelGrid::new(d, s, vec![1.0; d.len()]).unwrap();
        let t1 = VoxelGrid::new(d, s, vec![1.0; d.len()]).unwrap();
        let out = postprocess_pipeline(&labels, &t1ce, &t1, &PostprocessConfig::default()).unwrap();
        assert!(out.data().iter().all(|&v| v == 0));
    }

    #[test]
    fn pipeline_is_deterministic() {
        let d = Dims::new(6, 6, 6).unwrap();
        let s = Spacing::isotropic(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let labels = LabelVolume::new(
            d,
            s,
            (0..d.len()).map(|_| rng.gen_range(0..=4)).collect(),
        )
        .unwrap();
        let t1ce = VoxelGrid::new(d, s, (0..d.len()).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .unwrap();
        let t1 = VoxelGrid::new(d, s, (0..d.len()).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .unwrap();
        let cfg = PostprocessConfig::default();
        let a = postprocess_pipeline(&labels, &t1ce, &t1, &cfg).unwrap();
        let b = postprocess_pipeline(&labels, &t1ce, &t1, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn neutral_config_is_identity() {
        let d = Dims::new(5, 5, 5).unwrap();
        let s = Spacing::isotropic(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let labels = LabelVolume::new(
            d,
            s,
            (0..d.len()).map(|_| rng.gen_range(0..=4)).collect(),
        )
        .unwrap();
        let t1ce = VoxelGrid::new(d, s, (0..d.len()).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .unwrap();
        let t1 = t1ce.clone();
        let neutral = PostprocessConfig {
            relabel_enabled: false,
            volume_thresholds: BTreeMap::new(),
            ..PostprocessConfig::default()
        };
        let (out, report) = postprocess_pipeline_report(&labels, &t1ce, &t1, &neutral).unwrap();
        assert_eq!(out, labels);
        assert_eq!(report, PostprocessReport::default());
    }

    #[test]
    fn pipeline_report_counts_changes() {
        let d = Dims::new(5, 5, 4).unwrap();
        let s = Spacing::isotropic(2.0).unwrap();
        let mut labels = LabelVolume::zeros(d, s);
        // 25-voxel label-2 sheet that relabels up and survives.
        for y in 0..5 {
            for x in 0..5 {
                labels.set(x, y, 0, 2);
            }
        }
        // A lone label-1 voxel with down-going ratio that then dies by size.
        labels.set(2, 2, 2, 1);
        let mut t1ce = VoxelGrid::new(d, s, vec![2.0; d.len()]).unwrap();
        t1ce.set(2, 2, 2, 0.5);
        let t1 = VoxelGrid::new(d, s, vec![1.0; d.len()]).unwrap();

        let (out, report) =
            postprocess_pipeline_report(&labels, &t1ce, &t1, &PostprocessConfig::default())
                .unwrap();
        assert_eq!(report.relabeled_up, 25);
        assert_eq!(report.relabeled_down, 1);
        // The down-relabeled voxel became label 2 (no size filter) and the
        // sheet became label 1 with 200 mm³ (kept): nothing is removed.
        assert_eq!(report.removed_voxels, 0);
        assert_eq!(out.get(2, 2, 2), 2);
        assert_eq!(out.data().iter().filter(|&&v| v == 1).count(), 25);
    }

    #[test]
    fn threshold_construction_validates() {
        assert!(RatioThresholds::new(0.7, 1.4, 0.2, 5.0).is_err());
        assert!(RatioThresholds::new(1.4, -0.1, 0.2, 5.0).is_err());
        assert!(RatioThresholds::new(1.4, 0.7, 5.0, 0.2).is_err());
        assert!(RatioThresholds::new(1.4, 0.7, 0.2, 5.0).is_ok());
    }
}
