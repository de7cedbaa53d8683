//! Alpha-scaled Gaussian weight initialization: w ~ N(0, (2/dim_in)^alpha).
//!
//! alpha = 1 recovers the classical 2/fan-in variance scaling; alpha = 0 is
//! unit variance; larger alpha shrinks the variance whenever fan-in exceeds
//! two. Fan-in is C_in·k³ for convolutions and the input width for the
//! attention linears.

use crate::block::{DepthwiseSeparableBlock, ResidualSeBlock};
use crate::conv::Conv3d;
use crate::se::SeAttention;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Default variance exponent.
pub const DEFAULT_INIT_ALPHA: f64 = 1.0;

/// Closed-form variance (2/dim_in)^alpha.
pub fn init_variance(dim_in: usize, alpha: f64) -> f64 {
    (2.0 / dim_in as f64).powf(alpha)
}

/// Draws `len` i.i.d. samples with the alpha-scaled variance.
pub fn gaussian_init<R: Rng>(len: usize, dim_in: usize, alpha: f64, rng: &mut R) -> Vec<f64> {
    let std = init_variance(dim_in, alpha).sqrt();
    let normal = Normal::new(0.0, std).expect("finite standard deviation");
    (0..len).map(|_| normal.sample(rng)).collect()
}

/// Fills convolution weights (fan-in C_in·k³) and zeroes any bias.
pub fn init_conv<R: Rng>(conv: &mut Conv3d, alpha: f64, rng: &mut R) {
    let fan_in = conv.spec.fan_in();
    let drawn = gaussian_init(conv.weight.len(), fan_in, alpha, rng);
    conv.weight.data_mut().copy_from_slice(&drawn);
    if let Some(bias) = &mut conv.bias {
        bias.data_mut().fill(0.0);
    }
}

/// Fills both attention linears (fan-in = each layer's input width) and
/// zeroes the biases.
pub fn init_se<R: Rng>(se: &mut SeAttention, alpha: f64, rng: &mut R) {
    let (channels, hidden) = (se.channels(), se.hidden());
    let w1 = gaussian_init(se.w1.len(), channels, alpha, rng);
    se.w1.data_mut().copy_from_slice(&w1);
    let w2 = gaussian_init(se.w2.len(), hidden, alpha, rng);
    se.w2.data_mut().copy_from_slice(&w2);
    se.b1.data_mut().fill(0.0);
    se.b2.data_mut().fill(0.0);
}

/// Initializes every learned tensor of a residual block; norm affines stay
/// at their identity values.
pub fn init_residual_block<R: Rng>(block: &mut ResidualSeBlock, alpha: f64, rng: &mut R) {
    init_conv(&mut block.conv1, alpha, rng);
    init_conv(&mut block.conv2, alpha, rng);
    init_se(&mut block.se, alpha, rng);
}

/// Initializes the two convolutions of a separable block.
pub fn init_separable_block<R: Rng>(block: &mut DepthwiseSeparableBlock, alpha: f64, rng: &mut R) {
    init_conv(&mut block.depthwise, alpha, rng);
    init_conv(&mut block.pointwise, alpha, rng);
}
