//! Composite segmentation loss: soft Dice, cross-entropy, a boundary
//! distance term, and a false-positive penalty, each returning its value
//! together with an analytic gradient.
//!
//! Tensors follow the `(n, c, d, h, w)` layout from `pedseg_nn`. Channel 0
//! is background; channels `1..c` are foreground classes. Targets are
//! one-hot. Dice, the boundary term, and the false-positive penalty are
//! functions of probabilities; cross-entropy consumes raw logits. The
//! composite wrapper ties them together through a shared softmax and folds
//! everything back to a single gradient with respect to the logits.

use pedseg_core::morphology::{boundary, distance_transform};
use pedseg_core::volume::{Dims, Spacing};
use pedseg_nn::tensor::{Shape5, Tensor5};

use crate::error::{Error, Result};

/// Default weight of the false-positive penalty.
pub const DEFAULT_THETA: f64 = 0.1;
/// Default denominator stabilizer for the soft Dice ratio.
pub const DEFAULT_DICE_EPS: f64 = 1e-5;
/// Default exponent applied to boundary distances.
pub const DEFAULT_HD_BETA: f64 = 2.0;

/// Knobs shared by the individual loss terms and the composite wrapper.
#[derive(Debug, Clone)]
pub struct LossConfig {
    /// Scale of the false-positive penalty; zero disables it.
    pub theta: f64,
    /// Added to the soft Dice denominator only, never the numerator.
    pub dice_eps: f64,
    /// Exponent on the boundary distance maps.
    pub hd_beta: f64,
    /// Multiplier on the soft Dice term inside the composite loss.
    pub dice_weight: f64,
    /// Multiplier on the cross-entropy term inside the composite loss.
    pub ce_weight: f64,
    /// Multiplier on the boundary term inside the composite loss.
    pub hd_weight: f64,
    /// Optional per-class weights (length = channel count, background
    /// included). `None` means uniform. Dice averages foreground classes by
    /// these weights; cross-entropy weights each voxel by its true class.
    pub class_weights: Option<Vec<f64>>,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            theta: DEFAULT_THETA,
            dice_eps: DEFAULT_DICE_EPS,
            hd_beta: DEFAULT_HD_BETA,
            dice_weight: 1.0,
            ce_weight: 1.0,
            hd_weight: 1.0,
            class_weights: None,
        }
    }
}

impl LossConfig {
    /// Rejects configurations the loss math cannot support.
    pub fn validate(&self, classes: usize) -> Result<()> {
        if self.theta.is_nan() || self.theta < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "theta must be nonnegative, got {}",
                self.theta
            )));
        }
        if self.dice_eps.is_nan() || self.dice_eps <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "dice_eps must be positive, got {}",
                self.dice_eps
            )));
        }
        if self.hd_beta.is_nan() || self.hd_beta <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "hd_beta must be positive, got {}",
                self.hd_beta
            )));
        }
        if let Some(w) = &self.class_weights {
            if w.len() != classes {
                return Err(Error::InvalidConfig(format!(
                    "class_weights has {} entries for {} classes",
                    w.len(),
                    classes
                )));
            }
            if w.iter().any(|&v| !v.is_finite() || v < 0.0) {
                return Err(Error::InvalidConfig(
                    "class_weights must be finite and nonnegative".into(),
                ));
            }
            if w.iter().skip(1).all(|&v| v == 0.0) {
                return Err(Error::InvalidConfig(
                    "at least one foreground class weight must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    /// Weight of class `c`, defaulting to 1 when no weights are configured.
    fn class_weight(&self, c: usize) -> f64 {
        self.class_weights.as_ref().map_or(1.0, |w| w[c])
    }
}

/// Value and per-term breakdown of the composite loss, with the gradient
/// taken with respect to the input logits.
#[derive(Debug, Clone)]
pub struct CompositeLoss {
    pub total: f64,
    pub dice: f64,
    pub cross_entropy: f64,
    pub boundary: f64,
    pub fp_penalty: f64,
    pub grad_logits: Tensor5,
}

fn check_pair(a: &Tensor5, b: &Tensor5) -> Result<Shape5> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "prediction shape {:?} does not match target shape {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let shape = a.shape();
    if shape.c < 2 {
        return Err(Error::ShapeMismatch(format!(
            "segmentation losses need background plus at least one foreground class, got {} channels",
            shape.c
        )));
    }
    Ok(shape)
}

/// Verifies that `target` is one-hot along the channel axis.
fn check_one_hot(target: &Tensor5) -> Result<()> {
    let shape = target.shape();
    let spatial = shape.spatial_len();
    let data = target.data();
    for n in 0..shape.n {
        for v in 0..spatial {
            let mut sum = 0.0;
            for c in 0..shape.c {
                let t = data[(n * shape.c + c) * spatial + v];
                if t != 0.0 && t != 1.0 {
                    return Err(Error::ShapeMismatch(format!(
                        "target is not one-hot: found entry {t}"
                    )));
                }
                sum += t;
            }
            if sum != 1.0 {
                return Err(Error::ShapeMismatch(format!(
                    "target is not one-hot: channel sum {sum} at voxel {v}"
                )));
            }
        }
    }
    Ok(())
}

/// Channel-wise softmax, stabilized by subtracting the per-voxel maximum.
pub fn softmax(logits: &Tensor5) -> Tensor5 {
    let shape = logits.shape();
    let spatial = shape.spatial_len();
    let data = logits.data();
    let mut out = Tensor5::zeros(shape);
    {
        let o = out.data_mut();
        for n in 0..shape.n {
            for v in 0..spatial {
                let at = |c: usize| data[(n * shape.c + c) * spatial + v];
                let mut m = f64::NEG_INFINITY;
                for c in 0..shape.c {
                    m = m.max(at(c));
                }
                let mut z = 0.0;
                for c in 0..shape.c {
                    z += (at(c) - m).exp();
                }
                for c in 0..shape.c {
                    o[(n * shape.c + c) * spatial + v] = (at(c) - m).exp() / z;
                }
            }
        }
    }
    out
}

/// Pulls a gradient with respect to probabilities back through softmax:
/// `g_logit_c = p_c * (g_c - sum_k g_k * p_k)` per voxel.
pub fn softmax_pullback(probs: &Tensor5, grad_probs: &Tensor5) -> Result<Tensor5> {
    let shape = check_pair(probs, grad_probs)?;
    let spatial = shape.spatial_len();
    let p = probs.data();
    let g = grad_probs.data();
    let mut out = Tensor5::zeros(shape);
    {
        let o = out.data_mut();
        for n in 0..shape.n {
            for v in 0..spatial {
                let idx = |c: usize| (n * shape.c + c) * spatial + v;
                let mut inner = 0.0;
                for c in 0..shape.c {
                    inner += g[idx(c)] * p[idx(c)];
                }
                for c in 0..shape.c {
                    o[idx(c)] = p[idx(c)] * (g[idx(c)] - inner);
                }
            }
        }
    }
    Ok(out)
}

/// Negated soft Dice, averaged over samples and foreground classes.
///
/// Per sample and foreground class: `dice = 2 * sum(p*g) / (sum(p) +
/// sum(g) + eps)` with the stabilizer on the denominator only, sums taken
/// within the sample. The loss is the class-weighted mean of `-dice` over
/// all (sample, foreground class) pairs. A perfect prediction scores about
/// `-1`; a sample where the class is absent contributes 0 and no gradient,
/// since no prediction can intersect an empty ground truth. Returns the
/// gradient with respect to `probs`.
pub fn soft_dice_loss(
    probs: &Tensor5,
    target: &Tensor5,
    config: &LossConfig,
) -> Result<(f64, Tensor5)> {
    let shape = check_pair(probs, target)?;
    config.validate(shape.c)?;
    check_one_hot(target)?;
    let spatial = shape.spatial_len();
    let p = probs.data();
    let g = target.data();
    let mut grad = Tensor5::zeros(shape);

    let mut weight_sum = 0.0;
    let mut loss = 0.0;
    {
        let gr = grad.data_mut();
        for n in 0..shape.n {
            for c in 1..shape.c {
                let wc = config.class_weight(c);
                weight_sum += wc;
                let base = (n * shape.c + c) * spatial;
                let mut inter = 0.0;
                let mut psum = 0.0;
                let mut gsum = 0.0;
                for v in 0..spatial {
                    inter += p[base + v] * g[base + v];
                    psum += p[base + v];
                    gsum += g[base + v];
                }
                let denom = psum + gsum + config.dice_eps;
                loss -= wc * 2.0 * inter / denom;
                // d(-dice)/dp_i = -2 * (g_i * denom - inter) / denom^2
                let denom2 = denom * denom;
                for v in 0..spatial {
                    gr[base + v] = -wc * 2.0 * (g[base + v] * denom - inter) / denom2;
                }
            }
        }
    }
    let scale = 1.0 / weight_sum;
    loss *= scale;
    for v in grad.data_mut() {
        *v *= scale;
    }
    Ok((loss, grad))
}

/// Mean per-voxel negative log-likelihood of the softmax distribution.
///
/// Voxels are weighted by the class weight of their true class (uniform by
/// default) and normalized by the total weight. Returns the gradient with
/// respect to the logits.
pub fn cross_entropy_loss(
    logits: &Tensor5,
    target: &Tensor5,
    config: &LossConfig,
) -> Result<(f64, Tensor5)> {
    let shape = check_pair(logits, target)?;
    config.validate(shape.c)?;
    check_one_hot(target)?;
    let spatial = shape.spatial_len();
    let l = logits.data();
    let g = target.data();
    let mut grad = Tensor5::zeros(shape);

    let mut loss = 0.0;
    let mut weight_sum = 0.0;
    {
        let gr = grad.data_mut();
        for n in 0..shape.n {
            for v in 0..spatial {
                let idx = |c: usize| (n * shape.c + c) * spatial + v;
                let mut m = f64::NEG_INFINITY;
                for c in 0..shape.c {
                    m = m.max(l[idx(c)]);
                }
                let mut z = 0.0;
                for c in 0..shape.c {
                    z += (l[idx(c)] - m).exp();
                }
                let lse = m + z.ln();
                let mut true_logit = 0.0;
                let mut wv = 0.0;
                for c in 0..shape.c {
                    true_logit += g[idx(c)] * l[idx(c)];
                    wv += g[idx(c)] * config.class_weight(c);
                }
                loss += wv * (lse - true_logit);
                weight_sum += wv;
                for c in 0..shape.c {
                    let soft = (l[idx(c)] - m).exp() / z;
                    gr[idx(c)] = wv * (soft - g[idx(c)]);
                }
            }
        }
    }
    if weight_sum == 0.0 {
        return Err(Error::InvalidConfig(
            "cross-entropy weight sum is zero; every voxel has a zero-weight class".into(),
        ));
    }
    loss /= weight_sum;
    for v in grad.data_mut() {
        *v /= weight_sum;
    }
    Ok((loss, grad))
}

/// Precomputed boundary-distance weights, treated as constants by the
/// gradient. One weight field per `(batch, foreground class)` pair:
/// `w = d_target^beta + d_pred^beta`, where each `d` is the distance to the
/// respective mask boundary. Rebuilt once per optimization step.
#[derive(Debug, Clone)]
pub struct DistanceMaps {
    shape: Shape5,
    /// Indexed like the probability tensor restricted to channels `1..c`:
    /// `((n * (c - 1) + (cls - 1)) * spatial + v`.
    weights: Vec<f64>,
}

impl DistanceMaps {
    pub fn shape(&self) -> Shape5 {
        self.shape
    }

    fn weight_base(&self, n: usize, cls: usize) -> usize {
        let fg = self.shape.c - 1;
        (n * fg + (cls - 1)) * self.shape.spatial_len()
    }
}

/// Distance to the boundary of `mask`, or all zeros when the mask has no
/// boundary (empty or full grid): with no boundary there is nothing to
/// measure distance to, and the term should not blow up.
fn boundary_distance(mask: &[bool], dims: Dims, spacing: Spacing) -> Vec<f64> {
    let edge = boundary(mask, dims);
    if edge.iter().any(|&b| b) {
        distance_transform(&edge, dims, spacing)
    } else {
        vec![0.0; mask.len()]
    }
}

/// Builds the distance weights for [`boundary_hd_loss_with_maps`] from the
/// current prediction (thresholded at 0.5) and the target.
pub fn boundary_distance_maps(
    probs: &Tensor5,
    target: &Tensor5,
    spacing: Spacing,
    config: &LossConfig,
) -> Result<DistanceMaps> {
    let shape = check_pair(probs, target)?;
    config.validate(shape.c)?;
    let spatial = shape.spatial_len();
    // Tensor spatial axes are (d, h, w) with w fastest; Dims linearizes x
    // fastest, so (x, y, z) = (w, h, d) makes both layouts identical.
    let dims = Dims::new(shape.w, shape.h, shape.d)?;
    let p = probs.data();
    let g = target.data();
    let fg = shape.c - 1;
    let mut weights = vec![0.0; shape.n * fg * spatial];
    for n in 0..shape.n {
        for cls in 1..shape.c {
            let base = (n * shape.c + cls) * spatial;
            let gt_mask: Vec<bool> = (0..spatial).map(|v| g[base + v] >= 0.5).collect();
            let pred_mask: Vec<bool> = (0..spatial).map(|v| p[base + v] > 0.5).collect();
            let dg = boundary_distance(&gt_mask, dims, spacing);
            let dp = boundary_distance(&pred_mask, dims, spacing);
            let out = (n * fg + (cls - 1)) * spatial;
            for v in 0..spatial {
                weights[out + v] = dg[v].powf(config.hd_beta) + dp[v].powf(config.hd_beta);
            }
        }
    }
    Ok(DistanceMaps { shape, weights })
}

/// Boundary distance loss with frozen weight maps:
/// mean over foreground classes of `mean_voxels((p - g)^2 * w)`.
///
/// The maps are constants for the gradient, which is therefore exactly
/// `2 * (p - g) * w` times the averaging factor.
pub fn boundary_hd_loss_with_maps(
    probs: &Tensor5,
    target: &Tensor5,
    maps: &DistanceMaps,
    config: &LossConfig,
) -> Result<(f64, Tensor5)> {
    let shape = check_pair(probs, target)?;
    config.validate(shape.c)?;
    check_one_hot(target)?;
    if maps.shape != shape {
        return Err(Error::ShapeMismatch(format!(
            "distance maps were built for shape {:?}, got {:?}",
            maps.shape, shape
        )));
    }
    let spatial = shape.spatial_len();
    let p = probs.data();
    let g = target.data();
    let fg = shape.c - 1;
    let norm = 1.0 / (fg as f64 * (shape.n * spatial) as f64);
    let mut loss = 0.0;
    let mut grad = Tensor5::zeros(shape);
    {
        let gr = grad.data_mut();
        for n in 0..shape.n {
            for cls in 1..shape.c {
                let base = (n * shape.c + cls) * spatial;
                let wbase = maps.weight_base(n, cls);
                for v in 0..spatial {
                    let diff = p[base + v] - g[base + v];
                    let w = maps.weights[wbase + v];
                    loss += diff * diff * w * norm;
                    gr[base + v] = 2.0 * diff * w * norm;
                }
            }
        }
    }
    Ok((loss, grad))
}

/// Convenience wrapper: builds fresh distance maps from the current
/// prediction, then evaluates [`boundary_hd_loss_with_maps`].
pub fn boundary_hd_loss(
    probs: &Tensor5,
    target: &Tensor5,
    spacing: Spacing,
    config: &LossConfig,
) -> Result<(f64, Tensor5)> {
    let maps = boundary_distance_maps(probs, target, spacing, config)?;
    boundary_hd_loss_with_maps(probs, target, &maps, config)
}

/// False-positive penalty, averaged over foreground classes.
///
/// Per class: `theta * n_fp / (n_pred + n_gt)` with soft counts —
/// `n_fp` sums predicted probability over voxels the target marks as not
/// this class, `n_pred` sums it everywhere, `n_gt` counts target voxels.
/// A zero denominator (class absent and nothing predicted) contributes 0.
pub fn fp_regularizer(probs: &Tensor5, target: &Tensor5, theta: f64) -> Result<(f64, Tensor5)> {
    if theta.is_nan() || theta < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "theta must be nonnegative, got {theta}"
        )));
    }
    let shape = check_pair(probs, target)?;
    check_one_hot(target)?;
    let spatial = shape.spatial_len();
    let p = probs.data();
    let g = target.data();
    let fg = (shape.c - 1) as f64;
    let mut loss = 0.0;
    let mut grad = Tensor5::zeros(shape);
    {
        let gr = grad.data_mut();
        for cls in 1..shape.c {
            let mut n_fp = 0.0;
            let mut n_pred = 0.0;
            let mut n_gt = 0.0;
            for n in 0..shape.n {
                let base = (n * shape.c + cls) * spatial;
                for v in 0..spatial {
                    if g[base + v] == 0.0 {
                        n_fp += p[base + v];
                    }
                    n_pred += p[base + v];
                    n_gt += g[base + v];
                }
            }
            let denom = n_pred + n_gt;
            if denom == 0.0 {
                continue;
            }
            loss += theta * n_fp / denom / fg;
            // d(term)/dp_i = theta * (1{gt-neg} * denom - n_fp) / denom^2
            let denom2 = denom * denom;
            for n in 0..shape.n {
                let base = (n * shape.c + cls) * spatial;
                for v in 0..spatial {
                    let neg = if g[base + v] == 0.0 { 1.0 } else { 0.0 };
                    gr[base + v] = theta * (neg * denom - n_fp) / denom2 / fg;
                }
            }
        }
    }
    Ok((loss, grad))
}

/// Full composite loss with frozen boundary maps.
///
/// `total = dice_weight * dice + ce_weight * ce + hd_weight * hd + fp`,
/// summed in exactly that order so the value is bit-identical to summing
/// the separately computed terms. Dice, boundary, and false-positive
/// gradients flow through the shared softmax; cross-entropy contributes
/// its logit gradient directly.
pub fn composite_loss_with_maps(
    logits: &Tensor5,
    target: &Tensor5,
    maps: &DistanceMaps,
    config: &LossConfig,
) -> Result<CompositeLoss> {
    let shape = check_pair(logits, target)?;
    config.validate(shape.c)?;
    let probs = softmax(logits);
    let (dice, g_dice) = soft_dice_loss(&probs, target, config)?;
    let (ce, g_ce) = cross_entropy_loss(logits, target, config)?;
    let (hd, g_hd) = boundary_hd_loss_with_maps(&probs, target, maps, config)?;
    let (fp, g_fp) = fp_regularizer(&probs, target, config.theta)?;

    let total = config.dice_weight * dice + config.ce_weight * ce + config.hd_weight * hd + fp;

    let mut g_probs = Tensor5::zeros(shape);
    {
        let gp = g_probs.data_mut();
        let gd = g_dice.data();
        let gh = g_hd.data();
        let gf = g_fp.data();
        for i in 0..gp.len() {
            gp[i] = config.dice_weight * gd[i] + config.hd_weight * gh[i] + gf[i];
        }
    }
    let mut grad_logits = softmax_pullback(&probs, &g_probs)?;
    {
        let gl = grad_logits.data_mut();
        let gc = g_ce.data();
        for i in 0..gl.len() {
            gl[i] += config.ce_weight * gc[i];
        }
    }
    Ok(CompositeLoss {
        total,
        dice,
        cross_entropy: ce,
        boundary: hd,
        fp_penalty: fp,
        grad_logits,
    })
}

/// Full composite loss, rebuilding the boundary maps from the current
/// prediction (the normal per-step entry point).
pub fn composite_loss(
    logits: &Tensor5,
    target: &Tensor5,
    spacing: Spacing,
    config: &LossConfig,
) -> Result<CompositeLoss> {
    let probs = softmax(logits);
    let maps = boundary_distance_maps(&probs, target, spacing, config)?;
    composite_loss_with_maps(logits, target, &maps, config)
}
