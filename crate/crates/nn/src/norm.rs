//! Instance normalization over spatial dims and the leaky rectifier.

use crate::error::{Error, Result};
use crate::tensor::{Shape5, Tensor5};

/// Negative-side slope of the leaky rectifier used throughout the network.
pub const LEAKY_RELU_SLOPE: f64 = 0.01;

/// Default variance floor for instance normalization.
pub const INSTANCE_NORM_EPS: f64 = 1e-5;

/// Per-channel affine normalization over the spatial extent of each batch
/// element: every (n, c) slab is shifted to mean 0 and scaled to unit
/// variance before the learned scale and shift apply. A constant slab maps
/// exactly to the shift parameter.
#[derive(Debug, Clone)]
pub struct InstanceNorm {
    pub scale: Tensor5,
    pub shift: Tensor5,
    pub eps: f64,
    channels: usize,
}

/// Saved forward context: normalized values and per-slab inverse stddev.
#[derive(Debug, Clone)]
pub struct InstanceNormCtx {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    shape: Shape5,
}

impl InstanceNorm {
    /// Scale starts at 1, shift at 0 (identity affine).
    pub fn new(channels: usize) -> Self {
        let pshape = Shape5::new(1, channels, 1, 1, 1);
        let mut scale = Tensor5::zeros(pshape);
        scale.data_mut().fill(1.0);
        InstanceNorm {
            scale,
            shift: Tensor5::zeros(pshape),
            eps: INSTANCE_NORM_EPS,
            channels,
        }
    }

    pub fn parameter_count(&self) -> usize {
        2 * self.channels
    }

    pub fn forward(&self, x: &Tensor5) -> Result<(Tensor5, InstanceNormCtx)> {
        let shape = x.shape();
        if shape.c != self.channels {
            return Err(Error::ShapeMismatch(format!(
                "input has {} channels, norm has {}",
                shape.c, self.channels
            )));
        }
        let m = shape.spatial_len();
        let mut y = Tensor5::zeros(shape);
        let mut xhat = vec![0.0; shape.len()];
        let mut inv_std = vec![0.0; shape.n * shape.c];

        let xd = x.data();
        let yd = y.data_mut();
        let sc = self.scale.data();
        let sh = self.shift.data();
        for n in 0..shape.n {
            for c in 0..shape.c {
                let base = shape.index(n, c, 0, 0, 0);
                let slab = &xd[base..base + m];
                let mean = slab.iter().sum::<f64>() / m as f64;
                let var = slab.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
                let is = 1.0 / (var + self.eps).sqrt();
                inv_std[n * shape.c + c] = is;
                for i in 0..m {
                    let h = (slab[i] - mean) * is;
                    xhat[base + i] = h;
                    yd[base + i] = sc[c] * h + sh[c];
                }
            }
        }
        y.debug_check_finite("instance norm forward");
        Ok((
            y,
            InstanceNormCtx {
                xhat,
                inv_std,
                shape,
            },
        ))
    }

    /// Backward through the normalization statistics; accumulates scale and
    /// shift gradients, returns grad wrt the input.
    pub fn backward(&mut self, ctx: &InstanceNormCtx, grad_out: &Tensor5) -> Result<Tensor5> {
        let shape = ctx.shape;
        if grad_out.shape() != shape {
            return Err(Error::ContextMismatch(format!(
                "grad_out shape {:?} does not match forward input {:?}",
                grad_out.shape(),
                shape
            )));
        }
        let m = shape.spatial_len();
        let mf = m as f64;
        let mut gx = Tensor5::zeros(shape);
        let gxd = gx.data_mut();
        let gy = grad_out.data();
        let sc = self.scale.data().to_vec();
        let gscale = self.scale.grad_mut();
        let gshift = self.shift.grad_mut();

        for n in 0..shape.n {
            for c in 0..shape.c {
                let base = shape.index(n, c, 0, 0, 0);
                let is = ctx.inv_std[n * shape.c + c];
                let mut sum_g = 0.0;
                let mut sum_gh = 0.0;
                for i in 0..m {
                    let g = gy[base + i] * sc[c];
                    sum_g += g;
                    sum_gh += g * ctx.xhat[base + i];
                    gscale[c] += gy[base + i] * ctx.xhat[base + i];
                    gshift[c] += gy[base + i];
                }
                for i in 0..m {
                    let g = gy[base + i] * sc[c];
                    gxd[base + i] = is / mf * (mf * g - sum_g - ctx.xhat[base + i] * sum_gh);
                }
            }
        }
        Ok(gx)
    }
}

/// Elementwise max(x, slope·x).
pub fn leaky_relu(x: &Tensor5) -> Tensor5 {
    let mut y = Tensor5::zeros(x.shape());
    for (out, &v) in y.data_mut().iter_mut().zip(x.data()) {
        *out = if v > 0.0 { v } else { LEAKY_RELU_SLOPE * v };
    }
    y
}

/// Backward of the leaky rectifier given the forward *input*.
pub fn leaky_relu_backward(x: &Tensor5, grad_out: &Tensor5) -> Result<Tensor5> {
    if x.shape() != grad_out.shape() {
        return Err(Error::ContextMismatch(format!(
            "grad_out shape {:?} does not match input {:?}",
            grad_out.shape(),
            x.shape()
        )));
    }
    let mut gx = Tensor5::zeros(x.shape());
    for ((out, &v), &g) in gx.data_mut().iter_mut().zip(x.data()).zip(grad_out.data()) {
        *out = if v > 0.0 { g } else { LEAKY_RELU_SLOPE * g };
    }
    Ok(gx)
}
