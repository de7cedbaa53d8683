//! Finite-difference verification of every loss-term gradient.
//!
//! Mirrors the network-side checks: each loss is probed at a random point
//! with central differences (h = 1e-4) against its analytic gradient. The
//! boundary term and the composite loss are checked with frozen distance
//! maps — exactly the stop-gradient semantics the training step uses — so
//! the function under test is smooth and every coordinate is checkable.

use pedseg_core::volume::Spacing;
use pedseg_nn::gradcheck::{fd_check, FdOutcome, GradCheckReport};
use pedseg_nn::tensor::{Shape5, Tensor5};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::loss::{
    boundary_distance_maps, boundary_hd_loss_with_maps, composite_loss_with_maps,
    cross_entropy_loss, fp_regularizer, soft_dice_loss, softmax, LossConfig,
};

/// Tolerance for loss gradients; tighter than the block tolerance because
/// every loss is smooth at the probe points.
pub const LOSS_TOLERANCE: f64 = 1e-5;

const PROBE_SHAPE: Shape5 = Shape5 {
    n: 1,
    c: 3,
    d: 4,
    h: 4,
    w: 4,
};

/// Runs every loss check over `rounds` seeds starting at `base_seed` and
/// returns one report per loss term.
pub fn run_loss_suite(base_seed: u64, rounds: usize) -> Vec<GradCheckReport> {
    type OpFn = fn(u64) -> FdOutcome;
    let ops: [(&str, OpFn); 5] = [
        ("soft_dice_loss", check_soft_dice),
        ("cross_entropy_loss", check_cross_entropy),
        ("boundary_hd_loss", check_boundary),
        ("fp_regularizer", check_fp_regularizer),
        ("composite_loss", check_composite),
    ];
    ops.iter()
        .enumerate()
        .map(|(i, (name, check))| {
            let mut total = FdOutcome::default();
            for round in 0..rounds {
                let outcome = check(base_seed + 1000 * i as u64 + round as u64);
                total.max_rel_error = total.max_rel_error.max(outcome.max_rel_error);
                total.checked += outcome.checked;
                total.skipped += outcome.skipped;
            }
            GradCheckReport {
                op: name.to_string(),
                max_rel_error: total.max_rel_error,
                tolerance: LOSS_TOLERANCE,
                coords_checked: total.checked,
                coords_skipped: total.skipped,
            }
        })
        .collect()
}

fn random_one_hot(shape: Shape5, rng: &mut ChaCha8Rng) -> Tensor5 {
    let spatial = shape.spatial_len();
    let mut t = Tensor5::zeros(shape);
    for n in 0..shape.n {
        for v in 0..spatial {
            let cls = rng.gen_range(0..shape.c);
            t.data_mut()[(n * shape.c + cls) * spatial + v] = 1.0;
        }
    }
    t
}

/// Probabilities bounded away from 0 and 1 so no probe leaves (0, 1).
fn random_probs(shape: Shape5, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..shape.len()).map(|_| rng.gen_range(0.1..0.9)).collect()
}

fn random_logits(shape: Shape5, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..shape.len()).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

fn tensor(shape: Shape5, data: &[f64]) -> Tensor5 {
    Tensor5::from_vec(shape, data.to_vec()).expect("probe tensor")
}

fn check_soft_dice(seed: u64) -> FdOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = random_one_hot(PROBE_SHAPE, &mut rng);
    let config = LossConfig::default();
    let x0 = random_probs(PROBE_SHAPE, &mut rng);
    let (_, grad) = soft_dice_loss(&tensor(PROBE_SHAPE, &x0), &target, &config).unwrap();
    fd_check(&x0, grad.data(), |x| {
        let (loss, _) = soft_dice_loss(&tensor(PROBE_SHAPE, x), &target, &config).unwrap();
        (loss, 0)
    })
}

fn check_cross_entropy(seed: u64) -> FdOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = random_one_hot(PROBE_SHAPE, &mut rng);
    let config = LossConfig::default();
    let x0 = random_logits(PROBE_SHAPE, &mut rng);
    let (_, grad) = cross_entropy_loss(&tensor(PROBE_SHAPE, &x0), &target, &config).unwrap();
    fd_check(&x0, grad.data(), |x| {
        let (loss, _) = cross_entropy_loss(&tensor(PROBE_SHAPE, x), &target, &config).unwrap();
        (loss, 0)
    })
}

fn check_boundary(seed: u64) -> FdOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = random_one_hot(PROBE_SHAPE, &mut rng);
    let config = LossConfig::default();
    let spacing = Spacing::isotropic(1.0).unwrap();
    let x0 = random_probs(PROBE_SHAPE, &mut rng);
    let probs0 = tensor(PROBE_SHAPE, &x0);
    // Maps frozen at the probe point: the loss under test is the quadratic
    // form the optimizer actually differentiates.
    let maps = boundary_distance_maps(&probs0, &target, spacing, &config).unwrap();
    let (_, grad) = boundary_hd_loss_with_maps(&probs0, &target, &maps, &config).unwrap();
    fd_check(&x0, grad.data(), |x| {
        let (loss, _) =
            boundary_hd_loss_with_maps(&tensor(PROBE_SHAPE, x), &target, &maps, &config).unwrap();
        (loss, 0)
    })
}

fn check_fp_regularizer(seed: u64) -> FdOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = random_one_hot(PROBE_SHAPE, &mut rng);
    let theta = 0.1;
    let x0 = random_probs(PROBE_SHAPE, &mut rng);
    let (_, grad) = fp_regularizer(&tensor(PROBE_SHAPE, &x0), &target, theta).unwrap();
    fd_check(&x0, grad.data(), |x| {
        let (loss, _) = fp_regularizer(&tensor(PROBE_SHAPE, x), &target, theta).unwrap();
        (loss, 0)
    })
}

fn check_composite(seed: u64) -> FdOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = random_one_hot(PROBE_SHAPE, &mut rng);
    let config = LossConfig::default();
    let spacing = Spacing::isotropic(1.0).unwrap();
    let x0 = random_logits(PROBE_SHAPE, &mut rng);
    let logits0 = tensor(PROBE_SHAPE, &x0);
    let maps =
        boundary_distance_maps(&softmax(&logits0), &target, spacing, &config).unwrap();
    let out = composite_loss_with_maps(&logits0, &target, &maps, &config).unwrap();
    fd_check(&x0, out.grad_logits.data(), |x| {
        let loss = composite_loss_with_maps(&tensor(PROBE_SHAPE, x), &target, &maps, &config)
            .unwrap()
            .total;
        (loss, 0)
    })
}
