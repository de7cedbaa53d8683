//! Stochastic depth: during training, whole batch elements of a residual
//! branch are zeroed with probability p and survivors are rescaled by
//! 1/(1-p), keeping the branch unbiased in expectation. Inference is exact
//! identity.

use crate::error::{Error, Result};
use crate::tensor::Tensor5;
use rand::Rng;

/// Default branch-drop probability.
pub const DROP_PATH_PROB: f64 = 0.05;

/// Whether stochastic layers sample (training) or pass through (inference).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Infer,
}

/// Saved per-batch-element scales: 0 for dropped, 1/(1-p) for kept.
#[derive(Debug, Clone)]
pub struct DropPathCtx {
    scales: Vec<f64>,
}

impl DropPathCtx {
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }
}

/// Applies stochastic depth to a branch output.
pub fn drop_path<R: Rng>(
    x: &Tensor5,
    prob: f64,
    phase: Phase,
    rng: &mut R,
) -> Result<(Tensor5, DropPathCtx)> {
    if !(0.0..1.0).contains(&prob) {
        return Err(Error::ShapeMismatch(format!(
            "drop probability must lie in [0, 1), got {prob}"
        )));
    }
    let shape = x.shape();
    let scales: Vec<f64> = match phase {
        Phase::Infer => vec![1.0; shape.n],
        Phase::Train => (0..shape.n)
            .map(|_| {
                if rng.gen::<f64>() < prob {
                    0.0
                } else {
                    1.0 / (1.0 - prob)
                }
            })
            .collect(),
    };
    let mut y = Tensor5::zeros(shape);
    let per = shape.c * shape.spatial_len();
    {
        let yd = y.data_mut();
        let xd = x.data();
        for n in 0..shape.n {
            let s = scales[n];
            for i in 0..per {
                yd[n * per + i] = xd[n * per + i] * s;
            }
        }
    }
    Ok((y, DropPathCtx { scales }))
}

/// Backward: the same per-element scale applies to the gradient.
pub fn drop_path_backward(ctx: &DropPathCtx, grad_out: &Tensor5) -> Result<Tensor5> {
    let shape = grad_out.shape();
    if shape.n != ctx.scales.len() {
        return Err(Error::ContextMismatch(format!(
            "context covers {} batch elements, gradient has {}",
            ctx.scales.len(),
            shape.n
        )));
    }
    let mut gx = Tensor5::zeros(shape);
    let per = shape.c * shape.spatial_len();
    let gxd = gx.data_mut();
    let gy = grad_out.data();
    for n in 0..shape.n {
        let s = ctx.scales[n];
        for i in 0..per {
            gxd[n * per + i] = gy[n * per + i] * s;
        }
    }
    Ok(gx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape5;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(shape: Shape5) -> Tensor5 {
        Tensor5::from_vec(shape, (0..shape.len()).map(|i| i as f64 + 1.0).collect()).unwrap()
    }

    #[test]
    fn inference_is_exact_identity() {
        let x = ramp(Shape5::new(3, 2, 2, 2, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (y, ctx) = drop_path(&x, 0.9, Phase::Infer, &mut rng).unwrap();
        assert_eq!(y.data(), x.data());
        assert!(ctx.scales().iter().all(|&s| s == 1.0));
    }

    #[test]
    fn zero_probability_training_is_identity() {
        let x = ramp(Shape5::new(4, 1, 2, 2, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (y, _) = drop_path(&x, 0.0, Phase::Train, &mut rng).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn whole_batch_elements_drop_or_rescale_together() {
        let shape = Shape5::new(64, 2, 2, 2, 2);
        let x = ramp(shape);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let prob = 0.5;
        let (y, ctx) = drop_path(&x, prob, Phase::Train, &mut rng).unwrap();
        let per = shape.c * shape.spatial_len();
        let mut dropped = 0;
        for n in 0..shape.n {
            let s = ctx.scales()[n];
            assert!(s == 0.0 || s == 2.0);
            if s == 0.0 {
                dropped += 1;
            }
            for i in 0..per {
                assert_eq!(y.data()[n * per + i], x.data()[n * per + i] * s);
            }
        }
        assert!(dropped > 10 && dropped < 54, "dropped {dropped} of 64");
    }

    #[test]
    fn kept_fraction_rescaling_is_unbiased() {
        let prob = 0.1;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shape = Shape5::new(10_000, 1, 1, 1, 1);
        let x = Tensor5::from_vec(shape, vec![1.0; shape.len()]).unwrap();
        let (y, _) = drop_path(&x, prob, Phase::Train, &mut rng).unwrap();
        let mean = y.data().iter().sum::<f64>() / shape.n as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean scale {mean}");
    }

    #[test]
    fn backward_applies_the_saved_mask() {
        let shape = Shape5::new(8, 1, 2, 2, 2);
        let x = ramp(shape);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (_, ctx) = drop_path(&x, 0.5, Phase::Train, &mut rng).unwrap();
        let gy = ramp(shape);
        let gx = drop_path_backward(&ctx, &gy).unwrap();
        let per = shape.c * shape.spatial_len();
        for n in 0..shape.n {
            for i in 0..per {
                assert_eq!(gx.data()[n * per + i], gy.data()[n * per + i] * ctx.scales()[n]);
            }
        }
    }

    #[test]
    fn same_seed_same_mask() {
        let x = ramp(Shape5::new(32, 1, 1, 1, 1));
        let (_, a) = drop_path(&x, 0.3, Phase::Train, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let (_, b) = drop_path(&x, 0.3, Phase::Train, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.scales(), b.scales());
    }

    #[test]
    fn probability_one_is_rejected() {
        let x = ramp(Shape5::new(1, 1, 1, 1, 1));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(drop_path(&x, 1.0, Phase::Train, &mut rng).is_err());
        assert!(drop_path(&x, -0.1, Phase::Train, &mut rng).is_err());
    }
}
