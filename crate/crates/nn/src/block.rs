//! Composite blocks: the residual unit with channel attention and
//! stochastic depth, and the depthwise-separable convolution unit.

use crate::conv::{Conv3d, ConvCtx, ConvKind, ConvSpec};
use crate::droppath::{drop_path, drop_path_backward, DropPathCtx, Phase, DROP_PATH_PROB};
use crate::error::Result;
use crate::norm::{leaky_relu, leaky_relu_backward, InstanceNorm, InstanceNormCtx};
use crate::se::{SeAttention, SeCtx};
use crate::tensor::Tensor5;
use rand::Rng;

/// Residual block: y = act(x + SE(DropPath(F(x)))) where F is two
/// conv-norm units (3x3x3, stride 1, bias-free) with one activation between
/// them; the second unit's activation is deferred to the final one applied
/// after the skip connection is added.
#[derive(Debug, Clone)]
pub struct ResidualSeBlock {
    pub conv1: Conv3d,
    pub norm1: InstanceNorm,
    pub conv2: Conv3d,
    pub norm2: InstanceNorm,
    pub se: SeAttention,
    pub drop_prob: f64,
    channels: usize,
}

#[derive(Debug, Clone)]
pub struct ResidualSeCtx {
    conv1: ConvCtx,
    norm1: InstanceNormCtx,
    act1_in: Tensor5,
    conv2: ConvCtx,
    norm2: InstanceNormCtx,
    drop: DropPathCtx,
    se: SeCtx,
    pre: Tensor5,
}

impl ResidualSeBlock {
    pub fn new(channels: usize) -> Result<Self> {
        let spec = ConvSpec::new(ConvKind::Standard, 3, 1, channels, channels, false)?;
        Ok(ResidualSeBlock {
            conv1: Conv3d::new(spec),
            norm1: InstanceNorm::new(channels),
            conv2: Conv3d::new(spec),
            norm2: InstanceNorm::new(channels),
            se: SeAttention::new(channels),
            drop_prob: DROP_PATH_PROB,
            channels,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn parameter_count(&self) -> usize {
        self.conv1.parameter_count()
            + self.norm1.parameter_count()
            + self.conv2.parameter_count()
            + self.norm2.parameter_count()
            + self.se.parameter_count()
    }

    pub fn forward<R: Rng>(
        &self,
        x: &Tensor5,
        phase: Phase,
        rng: &mut R,
    ) -> Result<(Tensor5, ResidualSeCtx)> {
        let (c1, conv1_ctx) = self.conv1.forward(x)?;
        let (n1, norm1_ctx) = self.norm1.forward(&c1)?;
        let a1 = leaky_relu(&n1);
        let (c2, conv2_ctx) = self.conv2.forward(&a1)?;
        let (n2, norm2_ctx) = self.norm2.forward(&c2)?;
        let (dropped, drop_ctx) = drop_path(&n2, self.drop_prob, phase, rng)?;
        let (gated, se_ctx) = self.se.forward(&dropped)?;

        let mut pre = Tensor5::zeros(x.shape());
        for ((out, &a), &b) in pre.data_mut().iter_mut().zip(x.data()).zip(gated.data()) {
            *out = a + b;
        }
        let y = leaky_relu(&pre);
        Ok((
            y,
            ResidualSeCtx {
                conv1: conv1_ctx,
                norm1: norm1_ctx,
                act1_in: n1,
                conv2: conv2_ctx,
                norm2: norm2_ctx,
                drop: drop_ctx,
                se: se_ctx,
                pre,
            },
        ))
    }

    /// Backward through the skip connection and the full branch; parameter
    /// gradients accumulate into the owned modules.
    pub fn backward(&mut self, ctx: &ResidualSeCtx, grad_out: &Tensor5) -> Result<Tensor5> {
        let gpre = leaky_relu_backward(&ctx.pre, grad_out)?;
        // Branch path.
        let g_dropped = self.se.backward(&ctx.se, &gpre)?;
        let g_n2 = drop_path_backward(&ctx.drop, &g_dropped)?;
        let g_c2 = self.norm2.backward(&ctx.norm2, &g_n2)?;
        let g_a1 = self.conv2.backward(&ctx.conv2, &g_c2)?;
        let g_n1 = leaky_relu_backward(&ctx.act1_in, &g_a1)?;
        let g_c1 = self.norm1.backward(&ctx.norm1, &g_n1)?;
        let mut gx = self.conv1.backward(&ctx.conv1, &g_c1)?;
        // Skip path adds the pre-activation gradient unchanged.
        for (acc, &g) in gx.data_mut().iter_mut().zip(gpre.data()) {
            *acc += g;
        }
        Ok(gx)
    }

    pub fn for_each_parameter(&self, mut f: impl FnMut(&str, &Tensor5)) {
        f("conv1.weight", &self.conv1.weight);
        f("norm1.scale", &self.norm1.scale);
        f("norm1.shift", &self.norm1.shift);
        f("conv2.weight", &self.conv2.weight);
        f("norm2.scale", &self.norm2.scale);
        f("norm2.shift", &self.norm2.shift);
        f("se.w1", &self.se.w1);
        f("se.b1", &self.se.b1);
        f("se.w2", &self.se.w2);
        f("se.b2", &self.se.b2);
    }

    pub fn for_each_parameter_mut(&mut self, mut f: impl FnMut(&str, &mut Tensor5)) {
        f("conv1.weight", &mut self.conv1.weight);
        f("norm1.scale", &mut self.norm1.scale);
        f("norm1.shift", &mut self.norm1.shift);
        f("conv2.weight", &mut self.conv2.weight);
        f("norm2.scale", &mut self.norm2.scale);
        f("norm2.shift", &mut self.norm2.shift);
        f("se.w1", &mut self.se.w1);
        f("se.b1", &mut self.se.b1);
        f("se.w2", &mut self.se.w2);
        f("se.b2", &mut self.se.b2);
    }
}

/// Factorized convolution unit: depthwise 3x3x3 then pointwise 1x1x1, each
/// followed by instance norm and the leaky rectifier.
#[derive(Debug, Clone)]
pub struct DepthwiseSeparableBlock {
    pub depthwise: Conv3d,
    pub norm1: InstanceNorm,
    pub pointwise: Conv3d,
    pub norm2: InstanceNorm,
}

#[derive(Debug, Clone)]
pub struct SeparableCtx {
    depthwise: ConvCtx,
    norm1: InstanceNormCtx,
    act1_in: Tensor5,
    pointwise: ConvCtx,
    norm2: InstanceNormCtx,
    act2_in: Tensor5,
}

impl DepthwiseSeparableBlock {
    pub fn new(in_channels: usize, out_channels: usize) -> Result<Self> {
        Ok(DepthwiseSeparableBlock {
            depthwise: Conv3d::new(ConvSpec::new(
                ConvKind::Depthwise,
                3,
                1,
                in_channels,
                in_channels,
                false,
            )?),
            norm1: InstanceNorm::new(in_channels),
            pointwise: Conv3d::new(ConvSpec::new(
                ConvKind::Pointwise,
                1,
                1,
                in_channels,
                out_channels,
                false,
            )?),
            norm2: InstanceNorm::new(out_channels),
        })
    }

    /// Convolution weights only — the number compared against a standard
    /// 3x3x3 convolution when sizing the factorized variant.
    pub fn conv_parameter_count(&self) -> usize {
        self.depthwise.parameter_count() + self.pointwise.parameter_count()
    }

    pub fn parameter_count(&self) -> usize {
        self.conv_parameter_count() + self.norm1.parameter_count() + self.norm2.parameter_count()
    }

    pub fn forward(&self, x: &Tensor5) -> Result<(Tensor5, SeparableCtx)> {
        let (d, depthwise_ctx) = self.depthwise.forward(x)?;
        let (n1, norm1_ctx) = self.norm1.forward(&d)?;
        let a1 = leaky_relu(&n1);
        let (p, pointwise_ctx) = self.pointwise.forward(&a1)?;
        let (n2, norm2_ctx) = self.norm2.forward(&p)?;
        let y = leaky_relu(&n2);
        Ok((
            y,
            SeparableCtx {
                depthwise: depthwise_ctx,
                norm1: norm1_ctx,
                act1_in: n1,
                pointwise: pointwise_ctx,
                norm2: norm2_ctx,
                act2_in: n2,
            },
        ))
    }

    pub fn backward(&mut self, ctx: &SeparableCtx, grad_out: &Tensor5) -> Result<Tensor5> {
        let g_n2 = leaky_relu_backward(&ctx.act2_in, grad_out)?;
        let g_p = self.norm2.backward(&ctx.norm2, &g_n2)?;
        let g_a1 = self.pointwise.backward(&ctx.pointwise, &g_p)?;
        let g_n1 = leaky_relu_backward(&ctx.act1_in, &g_a1)?;
        let g_d = self.norm1.backward(&ctx.norm1, &g_n1)?;
        self.depthwise.backward(&ctx.depthwise, &g_d)
    }

    pub fn for_each_parameter_mut(&mut self, mut f: impl FnMut(&str, &mut Tensor5)) {
        f("depthwise.weight", &mut self.depthwise.weight);
        f("norm1.scale", &mut self.norm1.scale);
        f("norm1.shift", &mut self.norm1.shift);
        f("pointwise.weight", &mut self.pointwise.weight);
        f("norm2.scale", &mut self.norm2.scale);
        f("norm2.shift", &mut self.norm2.shift);
    }
}
