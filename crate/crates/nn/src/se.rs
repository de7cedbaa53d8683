//! Channel attention: squeeze (global average pool), a two-layer bottleneck,
//! and a sigmoid gate multiplied back onto every channel.

use crate::error::{Error, Result};
use crate::tensor::{Shape5, Tensor5};

/// Default bottleneck reduction factor.
pub const SE_REDUCTION: usize = 16;

/// Squeeze-and-excitation attention over channels.
///
/// Per batch element: channel means -> linear to `hidden` -> rectifier ->
/// linear back to `channels` -> sigmoid -> per-channel multiplicative gate.
/// With all parameters zero the gate is exactly 0.5, so the output is x/2.
#[derive(Debug, Clone)]
pub struct SeAttention {
    /// First linear, shape (hidden, channels, 1, 1, 1).
    pub w1: Tensor5,
    /// First bias, shape (1, hidden, 1, 1, 1).
    pub b1: Tensor5,
    /// Second linear, shape (channels, hidden, 1, 1, 1).
    pub w2: Tensor5,
    /// Second bias, shape (1, channels, 1, 1, 1).
    pub b2: Tensor5,
    channels: usize,
    hidden: usize,
}

/// Saved forward context.
#[derive(Debug, Clone)]
pub struct SeCtx {
    input: Vec<f64>,
    shape: Shape5,
    squeezed: Vec<f64>,
    pre1: Vec<f64>,
    hidden_act: Vec<f64>,
    gate: Vec<f64>,
}

impl SeAttention {
    pub fn new(channels: usize) -> Self {
        Self::with_reduction(channels, SE_REDUCTION)
    }

    pub fn with_reduction(channels: usize, reduction: usize) -> Self {
        let hidden = (channels / reduction).max(1);
        SeAttention {
            w1: Tensor5::zeros(Shape5::new(hidden, channels, 1, 1, 1)),
            b1: Tensor5::zeros(Shape5::new(1, hidden, 1, 1, 1)),
            w2: Tensor5::zeros(Shape5::new(channels, hidden, 1, 1, 1)),
            b2: Tensor5::zeros(Shape5::new(1, channels, 1, 1, 1)),
            channels,
            hidden,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn parameter_count(&self) -> usize {
        2 * self.channels * self.hidden + self.hidden + self.channels
    }

    pub fn forward(&self, x: &Tensor5) -> Result<(Tensor5, SeCtx)> {
        let shape = x.shape();
        if shape.c != self.channels {
            return Err(Error::ShapeMismatch(format!(
                "input has {} channels, attention has {}",
                shape.c, self.channels
            )));
        }
        let m = shape.spatial_len();
        let (nc, nh) = (self.channels, self.hidden);
        let xd = x.data();
        let mut squeezed = vec![0.0; shape.n * nc];
        let mut pre1 = vec![0.0; shape.n * nh];
        let mut hidden_act = vec![0.0; shape.n * nh];
        let mut gate = vec![0.0; shape.n * nc];
        let mut y = Tensor5::zeros(shape);
        let yd = y.data_mut();

        for n in 0..shape.n {
            let s = &mut squeezed[n * nc..(n + 1) * nc];
            for (c, slot) in s.iter_mut().enumerate() {
                let base = shape.index(n, c, 0, 0, 0);
                *slot = xd[base..base + m].iter().sum::<f64>() / m as f64;
            }
            for j in 0..nh {
                let mut acc = self.b1.data()[j];
                for (c, &sc) in s.iter().enumerate() {
                    acc += self.w1.data()[j * nc + c] * sc;
                }
                pre1[n * nh + j] = acc;
                hidden_act[n * nh + j] = acc.max(0.0);
            }
            for c in 0..nc {
                let mut acc = self.b2.data()[c];
                for j in 0..nh {
                    acc += self.w2.data()[c * nh + j] * hidden_act[n * nh + j];
                }
                let g = 1.0 / (1.0 + (-acc).exp());
                gate[n * nc + c] = g;
                let base = shape.index(n, c, 0, 0, 0);
                for i in 0..m {
                    yd[base + i] = xd[base + i] * g;
                }
            }
        }
        y.debug_check_finite("se forward");
        Ok((
            y,
            SeCtx {
                input: xd.to_vec(),
                shape,
                squeezed,
                pre1,
                hidden_act,
                gate,
            },
        ))
    }

    /// Backward through both product-rule paths (the gated identity and the
    /// gate's own dependence on the channel means).
    pub fn backward(&mut self, ctx: &SeCtx, grad_out: &Tensor5) -> Result<Tensor5> {
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
        let (nc, nh) = (self.channels, self.hidden);
        let gy = grad_out.data();
        let mut gx = Tensor5::zeros(shape);
        let gxd = gx.data_mut();

        for n in 0..shape.n {
            let s = &ctx.squeezed[n * nc..(n + 1) * nc];
            let gate = &ctx.gate[n * nc..(n + 1) * nc];
            // Direct path and gate cotangent.
            let mut ggate = vec![0.0; nc];
            for c in 0..nc {
                let base = shape.index(n, c, 0, 0, 0);
                for i in 0..m {
                    gxd[base + i] += gy[base + i] * gate[c];
                    ggate[c] += gy[base + i] * ctx.input[base + i];
                }
            }
            // Sigmoid and second linear.
            let mut ghidden = vec![0.0; nh];
            for c in 0..nc {
                let gpre2 = ggate[c] * gate[c] * (1.0 - gate[c]);
                self.b2.grad_mut()[c] += gpre2;
                for (j, gh) in ghidden.iter_mut().enumerate() {
                    self.w2.grad_mut()[c * nh + j] += gpre2 * ctx.hidden_act[n * nh + j];
                    *gh += gpre2 * self.w2.data()[c * nh + j];
                }
            }
            // Rectifier and first linear back to the channel means.
            let mut gsqueeze = vec![0.0; nc];
            for (j, &gh) in ghidden.iter().enumerate() {
                let gpre1 = if ctx.pre1[n * nh + j] > 0.0 { gh } else { 0.0 };
                self.b1.grad_mut()[j] += gpre1;
                for (c, gs) in gsqueeze.iter_mut().enumerate() {
                    self.w1.grad_mut()[j * nc + c] += gpre1 * s[c];
                    *gs += gpre1 * self.w1.data()[j * nc + c];
                }
            }
            // Mean pool distributes its gradient uniformly.
            for (c, &gs) in gsqueeze.iter().enumerate() {
                let base = shape.index(n, c, 0, 0, 0);
                for i in 0..m {
                    gxd[base + i] += gs / mf;
                }
            }
        }
        Ok(gx)
    }

    /// Iterate parameter tensors (for init, snapshots, optimizers).
    pub fn parameters_mut(&mut self) -> [&mut Tensor5; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}
