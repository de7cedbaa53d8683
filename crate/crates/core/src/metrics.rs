//! Segmentation quality metrics: voxel-wise Dice, lesion-wise Dice and
//! surface distance, and the per-region report assembled from them.
//!
//! The lesion-wise scores follow the component-matching scheme used by
//! recent tumor-segmentation challenges: ground-truth lesions are 26-labeled
//! after one 3×3×3 dilation, each is scored against the union of predicted
//! components touching its dilated extent, and unmatched predicted
//! components enter the average as zero-scored false positives.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::morphology::{boundary, connected_components, dilate, distance_transform, Connectivity};
use crate::volume::{Dims, LabelEncoding, LabelVolume, Spacing};

/// Voxel-wise Dice overlap: 2|P∩G| / (|P| + |G|).
///
/// Two empty masks score 1.0 (absence correctly predicted); exactly one
/// empty mask scores 0.0.
pub fn voxel_dice(pred: &[bool], gt: &[bool]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::DimsMismatch(format!(
            "voxel_dice: pred has {} voxels, gt has {}",
            pred.len(),
            gt.len()
        )));
    }
    let mut inter = 0usize;
    let mut p = 0usize;
    let mut g = 0usize;
    for (a, b) in pred.iter().zip(gt) {
        p += *a as usize;
        g += *b as usize;
        inter += (*a && *b) as usize;
    }
    if p + g == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (p + g) as f64)
}

/// Symmetric normalized surface distance at a tolerance in mm.
///
/// For each mask, the fraction of its boundary voxels lying within
/// `tolerance_mm` (Euclidean, spacing-weighted) of the other mask's boundary
/// is computed; the two fractions are averaged. Both masks empty → 1.0; one
/// empty → 0.0.
pub fn surface_distance_nsd(
    pred: &[bool],
    gt: &[bool],
    dims: Dims,
    spacing: Spacing,
    tolerance_mm: f64,
) -> Result<f64> {
    if pred.len() != gt.len() || pred.len() != dims.len() {
        return Err(Error::DimsMismatch(format!(
            "surface_distance_nsd: pred {} voxels, gt {} voxels, dims want {}",
            pred.len(),
            gt.len(),
            dims.len()
        )));
    }
    assert!(
        tolerance_mm > 0.0,
        "surface tolerance must be positive, got {tolerance_mm}"
    );

    let p_any = pred.iter().any(|&v| v);
    let g_any = gt.iter().any(|&v| v);
    if !p_any && !g_any {
        return Ok(1.0);
    }
    if p_any != g_any {
        return Ok(0.0);
    }

    let p_surf = boundary(pred, dims);
    let g_surf = boundary(gt, dims);
    let dist_to_g = distance_transform(&g_surf, dims, spacing);
    let dist_to_p = distance_transform(&p_surf, dims, spacing);

    let frac = |surf: &[bool], dist: &[f64]| -> f64 {
        let mut total = 0usize;
        let mut near = 0usize;
        for (s, d) in surf.iter().zip(dist) {
            if *s {
                total += 1;
                near += (*d <= tolerance_mm) as usize;
            }
        }
        // A nonempty mask always has a boundary voxel.
        near as f64 / total as f64
    };

    Ok(0.5 * (frac(&p_surf, &dist_to_g) + frac(&g_surf, &dist_to_p)))
}

/// Lesion-wise scores for one region, plus the lesion bookkeeping behind
/// them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LesionScores {
    pub lesion_wise_dice: f64,
    pub lesion_wise_nsd: f64,
    pub gt_lesion_count: usize,
    pub fp_lesion_count: usize,
    /// One entry per ground-truth lesion (in component order) followed by
    /// one zero per false-positive component, so the mean of this list is
    /// `lesion_wise_dice`.
    pub per_lesion_dice: Vec<f64>,
}

/// Computes lesion-wise Dice and NSD for one binary region.
///
/// Matching: ground truth is dilated once with the 3×3×3 box and 26-labeled;
/// predicted components are 26-labeled undilated. Each ground-truth lesion
/// is scored on its undilated voxels against the union of predicted
/// components intersecting its dilated extent; predicted components touching
/// no lesion count as false positives with score 0. The final score divides
/// the per-lesion sum by (lesion count + false-positive count).
pub fn lesion_scores(
    pred: &[bool],
    gt: &[bool],
    dims: Dims,
    spacing: Spacing,
    tolerance_mm: f64,
) -> Result<LesionScores> {
    if pred.len() != gt.len() || pred.len() != dims.len() {
        return Err(Error::DimsMismatch(format!(
            "lesion_scores: pred {} voxels, gt {} voxels, dims want {}",
            pred.len(),
            gt.len(),
            dims.len()
        )));
    }

    let gt_dilated = dilate(gt, dims);
    let gt_cc = connected_components(&gt_dilated, dims, Connectivity::TwentySix);
    let pred_cc = connected_components(pred, dims, Connectivity::TwentySix);

    // Which predicted components touch which dilated lesion.
    let mut matches: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); gt_cc.count()];
    let mut fp_lesion_count = 0usize;
    for (pi, comp) in pred_cc.components().iter().enumerate() {
        let mut hit_any = false;
        for &v in &comp.voxels {
            let g = gt_cc.label_at(v);
            if g != 0 {
                matches[g as usize - 1].insert(pi as u32 + 1);
                hit_any = true;
            }
        }
        if !hit_any {
            fp_lesion_count += 1;
        }
    }

    let gt_lesion_count = gt_cc.count();
    let denom = gt_lesion_count + fp_lesion_count;
    if denom == 0 {
        // Both masks empty: absence correctly predicted.
        return Ok(LesionScores {
            lesion_wise_dice: 1.0,
            lesion_wise_nsd: 1.0,
            gt_lesion_count: 0,
            fp_lesion_count: 0,
            per_lesion_dice: Vec::new(),
        });
    }

    let mut per_lesion_dice = Vec::with_capacity(denom);
    let mut nsd_sum = 0.0;
    for (gz, pred_ids) in matches.iter().enumerate() {
        let gid = gz as u32 + 1;
        let mut lesion_gt = vec![false; dims.len()];
        for i in 0..dims.len() {
            lesion_gt[i] = gt[i] && gt_cc.label_at(i) == gid;
        }
        let mut lesion_pred = vec![false; dims.len()];
        for &pid in pred_ids {
            for &v in &pred_cc.component(pid).voxels {
                lesion_pred[v] = true;
            }
        }
        per_lesion_dice.push(voxel_dice(&lesion_pred, &lesion_gt)?);
        nsd_sum += surface_distance_nsd(&lesion_pred, &lesion_gt, dims, spacing, tolerance_mm)?;
    }
    per_lesion_dice.extend(std::iter::repeat_n(0.0, fp_lesion_count));

    let dice_sum: f64 = per_lesion_dice.iter().sum();
    Ok(LesionScores {
        lesion_wise_dice: dice_sum / denom as f64,
        lesion_wise_nsd: nsd_sum / denom as f64,
        gt_lesion_count,
        fp_lesion_count,
        per_lesion_dice,
    })
}

/// Region keys of the evaluation report, in report column order.
pub const REPORT_REGIONS: [&str; 6] = ["CC", "ED", "ET", "NET", "TC", "WT"];

/// Per-region lesion-wise evaluation of a predicted labelmap against ground
/// truth: the four tumor classes plus the TC and WT composites.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LesionReport {
    pub tolerance_mm: f64,
    pub regions: BTreeMap<String, LesionScores>,
    pub mean_lesion_wise_dice: f64,
    pub mean_lesion_wise_nsd: f64,
}

impl LesionReport {
    pub fn from_volumes(
        pred: &LabelVolume,
        gt: &LabelVolume,
        encoding: &LabelEncoding,
        tolerance_mm: f64,
    ) -> Result<LesionReport> {
        if pred.dims() != gt.dims() {
            return Err(Error::DimsMismatch(format!(
                "lesion report: pred dims {:?}, gt dims {:?}",
                pred.dims(),
                gt.dims()
            )));
        }
        let dims = gt.dims();
        let spacing = gt.spacing();

        let single = |vol: &LabelVolume, label: u8| -> Vec<bool> {
            vol.data().iter().map(|&v| v == label).collect()
        };
        let multi = |vol: &LabelVolume, labels: &[u8]| -> Vec<bool> {
            vol.data().iter().map(|v| labels.contains(v)).collect()
        };

        let tc = encoding.tumor_core();
        let wt = encoding.whole_tumor();
        let masks: [(&str, Vec<bool>, Vec<bool>); 6] = [
            ("CC", single(pred, encoding.cystic), single(gt, encoding.cystic)),
            ("ED", single(pred, encoding.edema), single(gt, encoding.edema)),
            (
                "ET",
                single(pred, encoding.enhancing),
                single(gt, encoding.enhancing),
            ),
            (
                "NET",
                single(pred, encoding.non_enhancing),
                single(gt, encoding.non_enhancing),
            ),
            ("TC", multi(pred, &tc), multi(gt, &tc)),
            ("WT", multi(pred, &wt), multi(gt, &wt)),
        ];

        let mut regions = BTreeMap::new();
        for (name, p, g) in masks {
            regions.insert(
                name.to_string(),
                lesion_scores(&p, &g, dims, spacing, tolerance_mm)?,
            );
        }

        let n = regions.len() as f64;
        let mean_lesion_wise_dice =
            regions.values().map(|s| s.lesion_wise_dice).sum::<f64>() / n;
        let mean_lesion_wise_nsd = regions.values().map(|s| s.lesion_wise_nsd).sum::<f64>() / n;

        Ok(LesionReport {
            tolerance_mm,
            regions,
            mean_lesion_wise_dice,
            mean_lesion_wise_nsd,
        })
    }

    /// JSON document with per-class and mean rows; object keys sort
    /// lexicographically, which matches the report column order.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serialization cannot fail")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dims(nx: usize, ny: usize, nz: usize) -> Dims {
        Dims::new(nx, ny, nz).unwrap()
    }

    fn unit_spacing() -> Spacing {
        Spacing::isotropic(1.0).unwrap()
    }

    #[test]
    fn voxel_dice_degenerate_rules() {
        let a = vec![false; 8];
        let b = vec![false; 8];
        assert_eq!(voxel_dice(&a, &b).unwrap(), 1.0);

        let mut p = a.clone();
        p[3] = true;
        assert_eq!(voxel_dice(&p, &b).unwrap(), 0.0);
        assert_eq!(voxel_dice(&b, &p).unwrap(), 0.0);
        assert_eq!(voxel_dice(&p, &p).unwrap(), 1.0);
    }

    #[test]
    fn voxel_dice_half_overlap() {
        // |P| = 2, |G| = 2, |P∩G| = 1 → 2·1/4.
        let p = vec![true, true, false, false];
        let g = vec![false, true, true, false];
        assert_eq!(voxel_dice(&p, &g).unwrap(), 0.5);
    }

    #[test]
    fn voxel_dice_dim_mismatch() {
        let p = vec![true; 4];
        let g = vec![true; 5];
        assert!(matches!(voxel_dice(&p, &g), Err(Error::DimsMismatch(_))));
    }

    #[test]
    fn nsd_identical_and_degenerate() {
        let d = dims(4, 4, 4);
        let s = unit_spacing();
        let mut m = vec![false; d.len()];
        m[d.index(1, 1, 1)] = true;
        m[d.index(2, 1, 1)] = true;
        assert_eq!(surface_distance_nsd(&m, &m, d, s, 1.0).unwrap(), 1.0);

        let empty = vec![false; d.len()];
        assert_eq!(surface_distance_nsd(&empty, &empty, d, s, 1.0).unwrap(), 1.0);
        assert_eq!(surface_distance_nsd(&m, &empty, d, s, 1.0).unwrap(), 0.0);
        assert_eq!(surface_distance_nsd(&empty, &m, d, s, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn nsd_offset_cubes_within_tolerance() {
        // Two unit cubes (single voxels) offset by one step at unit spacing:
        // every boundary voxel of one is exactly 1 mm from the other.
        let d = dims(4, 1, 1);
        let s = unit_spacing();
        let mut p = vec![false; d.len()];
        let mut g = vec![false; d.len()];
        p[1] = true;
        g[2] = true;
        assert_eq!(surface_distance_nsd(&p, &g, d, s, 1.0).unwrap(), 1.0);
        // Below the offset distance nothing matches.
        assert_eq!(surface_distance_nsd(&p, &g, d, s, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn nsd_symmetry_on_random_masks() {
        let d = dims(6, 6, 6);
        let s = Spacing::new(1.0, 1.5, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let a: Vec<bool> = (0..d.len()).map(|_| rng.gen_bool(0.25)).collect();
            let b: Vec<bool> = (0..d.len()).map(|_| rng.gen_bool(0.25)).collect();
            let ab = surface_distance_nsd(&a, &b, d, s, 2.0).unwrap();
            let ba = surface_distance_nsd(&b, &a, d, s, 2.0).unwrap();
            assert_eq!(ab, ba);
        }
    }

    /// All-pairs oracle for the boundary-distance fractions.
    fn nsd_brute(pred: &[bool], gt: &[bool], d: Dims, s: Spacing, tol: f64) -> f64 {
        let p_any = pred.iter().any(|&v| v);
        let g_any = gt.iter().any(|&v| v);
        if !p_any && !g_any {
            return 1.0;
        }
        if p_any != g_any {
            return 0.0;
        }
        let ps = boundary(pred, d);
        let gs = boundary(gt, d);
        let coords = |i: usize| {
            let (x, y, z) = d.coords(i);
            (x as f64 * s.dx, y as f64 * s.dy, z as f64 * s.dz)
        };
        let min_dist = |i: usize, other: &[bool]| -> f64 {
            let (xi, yi, zi) = coords(i);
            let mut best = f64::INFINITY;
            for (j, &m) in other.iter().enumerate() {
                if m {
                    let (xj, yj, zj) = coords(j);
                    let dd = ((xi - xj).powi(2) + (yi - yj).powi(2) + (zi - zj).powi(2)).sqrt();
                    best = best.min(dd);
                }
            }
            best
        };
        let frac = |surf: &[bool], other: &[bool]| {
            let mut tot = 0;
            let mut ok = 0;
            for (i, &v) in surf.iter().enumerate() {
                if v {
                    tot += 1;
                    ok += (min_dist(i, other) <= tol) as usize;
                }
            }
            ok as f64 / tot as f64
        };
        0.5 * (frac(&ps, &gs) + frac(&gs, &ps))
    }

    #[test]
    fn nsd_matches_all_pairs_oracle() {
        let d = dims(8, 8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for trial in 0..12 {
            let s = Spacing::new(
                rng.gen_range(0.5..2.0),
                rng.gen_range(0.5..2.0),
                rng.gen_range(0.5..2.0),
            )
            .unwrap();
            let p: Vec<bool> = (0..d.len()).map(|_| rng.gen_bool(0.2)).collect();
            let g: Vec<bool> = (0..d.len()).map(|_| rng.gen_bool(0.2)).collect();
            let tol = rng.gen_range(0.5..3.0);
            let fast = surface_distance_nsd(&p, &g, d, s, tol).unwrap();
            let slow = nsd_brute(&p, &g, d, s, tol);
            assert!(
                (fast - slow).abs() < 1e-9,
                "trial {trial}: {fast} vs {slow}"
            );
        }
    }

    #[test]
    fn lesion_scores_degenerates_match_voxel_dice() {
        let d = dims(4, 4, 4);
        let s = unit_spacing();
        let empty = vec![false; d.len()];
        let both = lesion_scores(&empty, &empty, d, s, 1.0).unwrap();
        assert_eq!(both.lesion_wise_dice, 1.0);
        assert_eq!(both.lesion_wise_nsd, 1.0);

        let mut p = empty.clone();
        p[d.index(1, 1, 1)] = true;
        let fp_only = lesion_scores(&p, &empty, d, s, 1.0).unwrap();
        assert_eq!(fp_only.lesion_wise_dice, 0.0);
        assert_eq!(fp_only.fp_lesion_count, 1);
        assert_eq!(fp_only.gt_lesion_count, 0);

        let miss = lesion_scores(&empty, &p, d, s, 1.0).unwrap();
        assert_eq!(miss.lesion_wise_dice, 0.0);
        assert_eq!(miss.gt_lesion_count, 1);
    }

    #[test]
    fn perfect_lesion_plus_distant_fp_halves_score() {
        let d = dims(10, 3, 3);
        let s = unit_spacing();
        let mut gt = vec![false; d.len()];
        let mut pred = vec![false; d.len()];
        // One lesion predicted exactly.
        gt[d.index(1, 1, 1)] = true;
        pred[d.index(1, 1, 1)] = true;
        // One far-away false positive (beyond the dilated extent).
        pred[d.index(8, 1, 1)] = true;

        let scores = lesion_scores(&pred, &gt, d, s, 1.0).unwrap();
        assert_eq!(scores.gt_lesion_count, 1);
        assert_eq!(scores.fp_lesion_count, 1);
        assert_eq!(scores.per_lesion_dice, vec![1.0, 0.0]);
        assert_eq!(scores.lesion_wise_dice, 0.5);
    }

    #[test]
    fn single_overlapping_components_reduce_to_voxel_dice() {
        let d = dims(6, 6, 6);
        let s = unit_spacing();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            // One blob each, guaranteed to overlap at the blob seed.
            let cx = rng.gen_range(1..5);
            let cy = rng.gen_range(1..5);
            let cz = rng.gen_range(1..5);
            let mut p = vec![false; d.len()];
            let mut g = vec![false; d.len()];
            p[d.index(cx, cy, cz)] = true;
            g[d.index(cx, cy, cz)] = true;
            for _ in 0..rng.gen_range(0..6) {
                let x = (cx as isize + rng.gen_range(-1..=1)).clamp(0, 5) as usize;
                let y = (cy as isize + rng.gen_range(-1..=1)).clamp(0, 5) as usize;
                let z = (cz as isize + rng.gen_range(-1..=1)).clamp(0, 5) as usize;
                if rng.gen_bool(0.5) {
                    p[d.index(x, y, z)] = true;
                } else {
                    g[d.index(x, y, z)] = true;
                }
            }
            let lesion = lesion_scores(&p, &g, d, s, 1.0).unwrap();
            let voxel = voxel_dice(&p, &g).unwrap();
            assert!(
                (lesion.lesion_wise_dice - voxel).abs() < 1e-15,
                "single-component case must reduce to voxel dice"
            );
        }
    }

    #[test]
    fn adding_disjoint_fp_never_raises_score() {
        let d = dims(12, 4, 4);
        let s = unit_spacing();
        let mut gt = vec![false; d.len()];
        let mut pred = vec![false; d.len()];
        for x in 1..3 {
            gt[d.index(x, 1, 1)] = true;
            pred[d.index(x, 1, 1)] = true;
        }
        pred[d.index(3, 1, 1)] = true; // imperfect but matched

        let base = lesion_scores(&pred, &gt, d, s, 1.0).unwrap();
        let mut with_fp = pred.clone();
        with_fp[d.index(9, 2, 2)] = true;
        let worse = lesion_scores(&with_fp, &gt, d, s, 1.0).unwrap();
        assert!(worse.lesion_wise_dice < base.lesion_wise_dice);
    }

    #[test]
    fn lesion_matching_spans_dilated_extent() {
        // Pred component adjacent (within one voxel) of the GT lesion is
        // matched to it rather than counted as a false positive.
        let d = dims(8, 3, 3);
        let s = unit_spacing();
        let mut gt = vec![false; d.len()];
        let mut pred = vec![false; d.len()];
        gt[d.index(2, 1, 1)] = true;
        pred[d.index(3, 1, 1)] = true; // touches the dilated GT, not GT itself

        let scores = lesion_scores(&pred, &gt, d, s, 1.0).unwrap();
        assert_eq!(scores.fp_lesion_count, 0);
        assert_eq!(scores.gt_lesion_count, 1);
        // Matched but non-overlapping: Dice 0, NSD 1 at tolerance 1 mm.
        assert_eq!(scores.lesion_wise_dice, 0.0);
        assert_eq!(scores.lesion_wise_nsd, 1.0);
    }

    #[test]
    fn report_covers_expected_regions_and_mean() {
        let d = dims(4, 4, 4);
        let s = unit_spacing();
        let mut pred = LabelVolume::zeros(d, s);
        let mut gt = LabelVolume::zeros(d, s);
        for (x, label) in [(0usize, 1u8), (1, 2), (2, 3), (3, 4)] {
            pred.set(x, 0, 0, label);
            gt.set(x, 0, 0, label);
        }
        let enc = LabelEncoding::default();
        let report = LesionReport::from_volumes(&pred, &gt, &enc, 1.0).unwrap();

        let keys: Vec<&str> = report.regions.keys().map(String::as_str).collect();
        assert_eq!(keys, REPORT_REGIONS);
        assert_eq!(report.mean_lesion_wise_dice, 1.0);
        assert_eq!(report.mean_lesion_wise_nsd, 1.0);

        let json = report.to_json();
        assert!(json["regions"]["WT"]["lesion_wise_dice"].as_f64().unwrap() == 1.0);
        let text = serde_json::to_string(&json).unwrap();
        // Serialized key order is sorted, i.e. the report column order.
        let pos = |k: &str| text.find(&format!("\"{k}\"")).unwrap();
        assert!(pos("CC") < pos("ED"));
        assert!(pos("ED") < pos("ET"));
        assert!(pos("ET") < pos("NET"));
        assert!(pos("NET") < pos("TC"));
        assert!(pos("TC") < pos("WT"));
    }
}
