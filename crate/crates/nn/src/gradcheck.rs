//! Central-difference gradient verification for every differentiable
//! operation (h = 1e-4, double precision).
//!
//! Each check flattens input and parameters into one coordinate vector,
//! compares the analytic gradient of a random linear objective against the
//! symmetric difference quotient per coordinate, and reports the worst
//! relative error. Coordinates whose ±h evaluations land on opposite sides
//! of a rectifier kink are skipped — the difference quotient is not a valid
//! probe across a slope discontinuity — and the skip count is reported so
//! callers can see how much was excluded (in practice a tiny fraction).

use crate::block::{DepthwiseSeparableBlock, ResidualSeBlock};
use crate::conv::{Conv3d, ConvKind, ConvSpec};
use crate::droppath::Phase;
use crate::norm::{leaky_relu, leaky_relu_backward, InstanceNorm};
use crate::se::SeAttention;
use crate::tensor::{Shape5, Tensor5};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-4;

/// Tolerance for bare convolutions.
pub const CONV_TOLERANCE: f64 = 1e-5;

/// Tolerance for normalization, attention, and assembled blocks.
pub const BLOCK_TOLERANCE: f64 = 1e-4;

/// Outcome of one operation's check across all requested seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub op: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub coords_checked: usize,
    pub coords_skipped: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Result of one central-difference sweep.
#[derive(Debug, Clone, Copy, Default)]
pub struct FdOutcome {
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
}

/// Runs every operation check over `rounds` seeds starting at `base_seed`
/// and returns one report per operation.
pub fn run_suite(base_seed: u64, rounds: usize) -> Vec<GradCheckReport> {
    type OpFn = fn(u64) -> FdOutcome;
    let ops: [(&str, f64, OpFn); 10] = [
        ("conv3d_standard", CONV_TOLERANCE, check_conv_standard),
        ("conv3d_stride2", CONV_TOLERANCE, check_conv_stride2),
        ("conv3d_depthwise", CONV_TOLERANCE, check_conv_depthwise),
        ("conv3d_pointwise", CONV_TOLERANCE, check_conv_pointwise),
        ("conv3d_transposed", CONV_TOLERANCE, check_conv_transposed),
        ("instance_norm", BLOCK_TOLERANCE, check_instance_norm),
        ("leaky_relu", BLOCK_TOLERANCE, check_leaky_relu),
        ("se_attention", BLOCK_TOLERANCE, check_se_attention),
        (
            "depthwise_separable_block",
            BLOCK_TOLERANCE,
            check_separable_block,
        ),
        ("residual_se_block", BLOCK_TOLERANCE, check_residual_block),
    ];

    ops.iter()
        .enumerate()
        .map(|(i, (name, tolerance, check))| {
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
                tolerance: *tolerance,
                coords_checked: total.checked,
                coords_skipped: total.skipped,
            }
        })
        .collect()
}

/// Central-difference sweep over every coordinate. `eval` returns the
/// objective and a hash of all rectifier-input signs; a coordinate whose
/// two probes disagree on that hash crossed a kink and is skipped.
pub fn fd_check(
    x0: &[f64],
    analytic: &[f64],
    mut eval: impl FnMut(&[f64]) -> (f64, u64),
) -> FdOutcome {
    assert_eq!(x0.len(), analytic.len(), "analytic gradient length");
    let mut x = x0.to_vec();
    let mut outcome = FdOutcome::default();
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + FD_STEP;
        let (fp, sig_p) = eval(&x);
        x[i] = orig - FD_STEP;
        let (fm, sig_m) = eval(&x);
        x[i] = orig;
        if sig_p != sig_m {
            outcome.skipped += 1;
            continue;
        }
        let numeric = (fp - fm) / (2.0 * FD_STEP);
        let denom = 1.0_f64.max(analytic[i].abs()).max(numeric.abs());
        let err = (analytic[i] - numeric).abs() / denom;
        outcome.max_rel_error = outcome.max_rel_error.max(err);
        outcome.checked += 1;
    }
    outcome
}

fn rand_vec<R: Rng>(rng: &mut R, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(lo..hi)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sign_hash(seed: u64, values: &[f64]) -> u64 {
    let mut h = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
    for &v in values {
        h = h
            .wrapping_mul(0x100000001b3)
            .wrapping_add(u64::from(v > 0.0));
    }
    h
}

// ---------------------------------------------------------------- convs --

fn check_conv(seed: u64, spec: ConvSpec, in_shape: Shape5, target: Option<(usize, usize, usize)>) -> FdOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wlen = spec.weight_shape().len();
    let blen = if spec.bias { spec.out_channels } else { 0 };
    let xv = rand_vec(&mut rng, in_shape.len(), -1.0, 1.0);
    let wv = rand_vec(&mut rng, wlen, -0.5, 0.5);
    let bv = rand_vec(&mut rng, blen, -0.5, 0.5);

    let build = |xs: &[f64]| -> (Tensor5, Conv3d) {
        let x = Tensor5::from_vec(in_shape, xs[..in_shape.len()].to_vec()).unwrap();
        let w = xs[in_shape.len()..in_shape.len() + wlen].to_vec();
        let b = (blen > 0).then(|| xs[in_shape.len() + wlen..].to_vec());
        (x, Conv3d::with_weights(spec, w, b).unwrap())
    };
    let run = |x: &Tensor5, conv: &Conv3d| match target {
        Some(dims) => conv.forward_to(x, dims).unwrap(),
        None => conv.forward(x).unwrap(),
    };

    let mut flat = xv;
    flat.extend(wv);
    flat.extend(bv);

    let (x0, mut conv) = build(&flat);
    let (y, ctx) = run(&x0, &conv);
    let cot = Tensor5::from_vec(y.shape(), rand_vec(&mut rng, y.len(), -1.0, 1.0)).unwrap();
    let gx = conv.backward(&ctx, &cot).unwrap();

    let mut analytic = gx.data().to_vec();
    analytic.extend_from_slice(conv.weight.grad());
    if let Some(bias) = &conv.bias {
        analytic.extend_from_slice(bias.grad());
    }

    fd_check(&flat, &analytic, |xs| {
        let (x, conv) = build(xs);
        let (y, _) = run(&x, &conv);
        (dot(y.data(), cot.data()), 0)
    })
}

fn check_conv_standard(seed: u64) -> FdOutcome {
    let spec = ConvSpec::new(ConvKind::Standard, 3, 1, 2, 3, true).unwrap();
    check_conv(seed, spec, Shape5::new(1, 2, 4, 4, 4), None)
}

fn check_conv_stride2(seed: u64) -> FdOutcome {
    let spec = ConvSpec::new(ConvKind::Standard, 3, 2, 2, 3, false).unwrap();
    check_conv(seed, spec, Shape5::new(1, 2, 5, 4, 5), None)
}

fn check_conv_depthwise(seed: u64) -> FdOutcome {
    let spec = ConvSpec::new(ConvKind::Depthwise, 3, 1, 3, 3, true).unwrap();
    check_conv(seed, spec, Shape5::new(1, 3, 3, 4, 3), None)
}

fn check_conv_pointwise(seed: u64) -> FdOutcome {
    let spec = ConvSpec::new(ConvKind::Pointwise, 1, 1, 3, 2, false).unwrap();
    check_conv(seed, spec, Shape5::new(2, 3, 3, 3, 3), None)
}

fn check_conv_transposed(seed: u64) -> FdOutcome {
    let spec = ConvSpec::new(ConvKind::Transposed, 3, 2, 2, 2, true).unwrap();
    check_conv(seed, spec, Shape5::new(1, 2, 2, 2, 2), Some((3, 4, 3)))
}

// ------------------------------------------------- norm and activation --

fn check_instance_norm(seed: u64) -> FdOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = Shape5::new(2, 3, 3, 3, 3);
    let channels = shape.c;
    let xv = rand_vec(&mut rng, shape.len(), -1.0, 1.0);
    let scale: Vec<f64> = rand_vec(&mut rng, channels, 0.6, 1.4);
    let shift = rand_vec(&mut rng, channels, -0.4, 0.4);

    let build = |xs: &[f64]| -> (Tensor5, InstanceNorm) {
        let x = Tensor5::from_vec(shape, xs[..shape.len()].to_vec()).unwrap();
        let mut norm = InstanceNorm::new(channels);
        norm.scale
            .data_mut()
            .copy_from_slice(&xs[shape.len()..shape.len() + channels]);
        norm.shift
            .data_mut()
            .copy_from_slice(&xs[shape.len() + channels..]);
        (x, norm)
    };

    let mut flat = xv;
    flat.extend(scale);
    flat.extend(shift);

    let (x0, mut norm) = build(&flat);
    let (y, ctx) = norm.forward(&x0).unwrap();
    let cot = Tensor5::from_vec(shape, rand_vec(&mut rng, y.len(), -1.0, 1.0)).unwrap();
    let gx = norm.backward(&ctx, &cot).unwrap();

    let mut analytic = gx.data().to_vec();
    analytic.extend_from_slice(norm.scale.grad());
    analytic.extend_from_slice(norm.shift.grad());

    fd_check(&flat, &analytic, |xs| {
        let (x, norm) = build(xs);
        let (y, _) = norm.forward(&x).unwrap();
        (dot(y.data(), cot.data()), 0)
    })
}

fn check_leaky_relu(seed: u64) -> FdOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = Shape5::new(2, 3, 3, 3, 3);
    // Magnitudes stay clear of the kink so ±h never crosses it.
    let xv: Vec<f64> = (0..shape.len())
        .map(|_| rng.gen_range(0.05..1.5) * if rng.gen::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let x0 = Tensor5::from_vec(shape, xv.clone()).unwrap();
    let cot = Tensor5::from_vec(shape, rand_vec(&mut rng, shape.len(), -1.0, 1.0)).unwrap();
    let analytic = leaky_relu_backward(&x0, &cot).unwrap();

    fd_check(&xv, analytic.data(), |xs| {
        let x = Tensor5::from_vec(shape, xs.to_vec()).unwrap();
        let y = leaky_relu(&x);
        (dot(y.data(), cot.data()), sign_hash(1, xs))
    })
}

// ------------------------------------------------------------ attention --

fn se_pre_activations(se: &SeAttention, x: &Tensor5) -> Vec<f64> {
    let shape = x.shape();
    let m = shape.spatial_len();
    let (nc, nh) = (se.channels(), se.hidden());
    let mut pre = Vec::with_capacity(shape.n * nh);
    for n in 0..shape.n {
        let mut s = vec![0.0; nc];
        for (c, slot) in s.iter_mut().enumerate() {
            let base = shape.index(n, c, 0, 0, 0);
            *slot = x.data()[base..base + m].iter().sum::<f64>() / m as f64;
        }
        for j in 0..nh {
            let mut acc = se.b1.data()[j];
            for (c, &sc) in s.iter().enumerate() {
                acc += se.w1.data()[j * nc + c] * sc;
            }
            pre.push(acc);
        }
    }
    pre
}

fn check_se_attention(seed: u64) -> FdOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = Shape5::new(2, 4, 2, 2, 2);
    let template = SeAttention::with_reduction(4, 2);
    let (nc, nh) = (template.channels(), template.hidden());
    let lens = [shape.len(), nh * nc, nh, nc * nh, nc];

    let xv = rand_vec(&mut rng, lens[0], -1.0, 1.0);
    let w1 = rand_vec(&mut rng, lens[1], -0.7, 0.7);
    let b1 = rand_vec(&mut rng, lens[2], -0.5, 0.5);
    let w2 = rand_vec(&mut rng, lens[3], -0.7, 0.7);
    let b2 = rand_vec(&mut rng, lens[4], -0.5, 0.5);

    let build = |xs: &[f64]| -> (Tensor5, SeAttention) {
        let mut off = 0usize;
        let mut next = |len: usize| {
            let s = &xs[off..off + len];
            off += len;
            s
        };
        let x = Tensor5::from_vec(shape, next(lens[0]).to_vec()).unwrap();
        let mut se = SeAttention::with_reduction(4, 2);
        se.w1.data_mut().copy_from_slice(next(lens[1]));
        se.b1.data_mut().copy_from_slice(next(lens[2]));
        se.w2.data_mut().copy_from_slice(next(lens[3]));
        se.b2.data_mut().copy_from_slice(next(lens[4]));
        (x, se)
    };

    let mut flat = xv;
    for seg in [w1, b1, w2, b2] {
        flat.extend(seg);
    }

    let (x0, mut se) = build(&flat);
    let (y, ctx) = se.forward(&x0).unwrap();
    let cot = Tensor5::from_vec(shape, rand_vec(&mut rng, y.len(), -1.0, 1.0)).unwrap();
    let gx = se.backward(&ctx, &cot).unwrap();

    let mut analytic = gx.data().to_vec();
    for t in [&se.w1, &se.b1, &se.w2, &se.b2] {
        analytic.extend_from_slice(t.grad());
    }

    fd_check(&flat, &analytic, |xs| {
        let (x, se) = build(xs);
        let (y, _) = se.forward(&x).unwrap();
        let pre = se_pre_activations(&se, &x);
        (dot(y.data(), cot.data()), sign_hash(2, &pre))
    })
}

// --------------------------------------------------------------- blocks --

/// Magnitude-floored draws: |v| in [0.4, 0.9) with random sign. Used for
/// channel-mixing weights feeding an instance norm, so the mixed slab
/// variance stays bounded away from the eps floor — near-zero variance
/// makes 1/sqrt(var+eps) steep enough that the h² truncation term of the
/// difference quotient swamps the comparison. This conditions the probe
/// point; the tolerance is untouched.
fn rand_vec_floored<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len)
        .map(|_| rng.gen_range(0.4..0.9) * if rng.gen::<bool>() { 1.0 } else { -1.0 })
        .collect()
}

fn check_separable_block(seed: u64) -> FdOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = Shape5::new(1, 3, 3, 3, 3);

    let mut flat = rand_vec(&mut rng, shape.len(), -1.0, 1.0);
    {
        let mut template = DepthwiseSeparableBlock::new(3, 3).unwrap();
        // Depthwise taps moderate, pointwise mix floored, norm scales near
        // 1, shifts small.
        template.for_each_parameter_mut(|name, t| {
            let seg = if name == "pointwise.weight" {
                rand_vec_floored(&mut rng, t.len())
            } else if name.ends_with("weight") {
                rand_vec(&mut rng, t.len(), -0.5, 0.5)
            } else if name.ends_with("scale") {
                rand_vec(&mut rng, t.len(), 0.6, 1.4)
            } else {
                rand_vec(&mut rng, t.len(), -0.4, 0.4)
            };
            flat.extend(seg);
        });
    }

    let build = |xs: &[f64]| -> (Tensor5, DepthwiseSeparableBlock) {
        let x = Tensor5::from_vec(shape, xs[..shape.len()].to_vec()).unwrap();
        let mut block = DepthwiseSeparableBlock::new(3, 3).unwrap();
        let mut off = shape.len();
        block.for_each_parameter_mut(|_, t| {
            let len = t.len();
            t.data_mut().copy_from_slice(&xs[off..off + len]);
            off += len;
        });
        (x, block)
    };

    let (x0, mut block) = build(&flat);
    let (y, ctx) = block.forward(&x0).unwrap();
    let cot = Tensor5::from_vec(y.shape(), rand_vec(&mut rng, y.len(), -1.0, 1.0)).unwrap();
    let gx = block.backward(&ctx, &cot).unwrap();

    let mut analytic = gx.data().to_vec();
    block.for_each_parameter_mut(|_, t| analytic.extend_from_slice(t.grad()));

    fd_check(&flat, &analytic, |xs| {
        let (x, block) = build(xs);
        // Manual chain mirrors forward exactly and exposes the two
        // rectifier inputs for kink detection.
        let (d, _) = block.depthwise.forward(&x).unwrap();
        let (n1, _) = block.norm1.forward(&d).unwrap();
        let a1 = leaky_relu(&n1);
        let (p, _) = block.pointwise.forward(&a1).unwrap();
        let (n2, _) = block.norm2.forward(&p).unwrap();
        let y = leaky_relu(&n2);
        let mut sig = sign_hash(3, n1.data());
        sig ^= sign_hash(4, n2.data());
        (dot(y.data(), cot.data()), sig)
    })
}

fn check_residual_block(seed: u64) -> FdOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = Shape5::new(1, 2, 3, 3, 3);

    let mut flat = rand_vec(&mut rng, shape.len(), -1.0, 1.0);
    {
        let mut template = ResidualSeBlock::new(2).unwrap();
        template.for_each_parameter_mut(|name, t| {
            let seg = if name.ends_with("weight") || name.starts_with("se.w") {
                rand_vec(&mut rng, t.len(), -0.6, 0.6)
            } else if name.ends_with("scale") {
                rand_vec(&mut rng, t.len(), 0.6, 1.4)
            } else {
                rand_vec(&mut rng, t.len(), -0.4, 0.4)
            };
            flat.extend(seg);
        });
    }

    let build = |xs: &[f64]| -> (Tensor5, ResidualSeBlock) {
        let x = Tensor5::from_vec(shape, xs[..shape.len()].to_vec()).unwrap();
        let mut block = ResidualSeBlock::new(2).unwrap();
        let mut off = shape.len();
        block.for_each_parameter_mut(|_, t| {
            let len = t.len();
            t.data_mut().copy_from_slice(&xs[off..off + len]);
            off += len;
        });
        (x, block)
    };

    let (x0, mut block) = build(&flat);
    let mut rng_fwd = ChaCha8Rng::seed_from_u64(0);
    let (y, ctx) = block.forward(&x0, Phase::Infer, &mut rng_fwd).unwrap();
    let cot = Tensor5::from_vec(y.shape(), rand_vec(&mut rng, y.len(), -1.0, 1.0)).unwrap();
    let gx = block.backward(&ctx, &cot).unwrap();

    let mut analytic = gx.data().to_vec();
    block.for_each_parameter_mut(|_, t| analytic.extend_from_slice(t.grad()));

    fd_check(&flat, &analytic, |xs| {
        let (x, block) = build(xs);
        // Inference-mode chain: drop-path is the identity.
        let (c1, _) = block.conv1.forward(&x).unwrap();
        let (n1, _) = block.norm1.forward(&c1).unwrap();
        let a1 = leaky_relu(&n1);
        let (c2, _) = block.conv2.forward(&a1).unwrap();
        let (n2, _) = block.norm2.forward(&c2).unwrap();
        let (gated, _) = block.se.forward(&n2).unwrap();
        let mut pre = Tensor5::zeros(shape);
        for ((o, &a), &b) in pre.data_mut().iter_mut().zip(x.data()).zip(gated.data()) {
            *o = a + b;
        }
        let y = leaky_relu(&pre);
        let mut sig = sign_hash(5, n1.data());
        sig ^= sign_hash(6, &se_pre_activations(&block.se, &n2));
        sig ^= sign_hash(7, pre.data());
        (dot(y.data(), cot.data()), sig)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_suite_passes_across_twenty_seeds() {
        let reports = run_suite(42, 20);
        assert_eq!(reports.len(), 10);
        for report in &reports {
            assert!(
                report.passed(),
                "{}: max rel error {} vs tolerance {}",
                report.op,
                report.max_rel_error,
                report.tolerance
            );
            assert!(report.coords_checked > 0);
            // Kink skips must stay a tiny fraction of the sweep.
            let total = (report.coords_checked + report.coords_skipped) as f64;
            assert!(
                (report.coords_skipped as f64) < 0.02 * total,
                "{}: skipped {} of {}",
                report.op,
                report.coords_skipped,
                total
            );
        }
    }

    #[test]
    fn suite_is_deterministic_for_a_fixed_seed() {
        let a = run_suite(7, 2);
        let b = run_suite(7, 2);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.op, y.op);
            assert_eq!(x.max_rel_error.to_bits(), y.max_rel_error.to_bits());
            assert_eq!(x.coords_skipped, y.coords_skipped);
        }
    }

    #[test]
    fn convolution_errors_sit_well_under_the_tight_tolerance() {
        let reports = run_suite(3, 5);
        for report in reports.iter().filter(|r| r.op.starts_with("conv3d")) {
            assert!(
                report.max_rel_error < CONV_TOLERANCE,
                "{}: {}",
                report.op,
                report.max_rel_error
            );
        }
    }
}
