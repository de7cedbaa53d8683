//! 3D convolutions: standard, depthwise, pointwise, and transposed, with
//! exact adjoint backward passes.
//!
//! Zero padding keeps spatial size at stride 1 ("same"); stride 2 halves
//! each axis with ceiling rounding. Transposed convolution inverts the
//! stride-2 spatial map and takes explicit output dimensions, because both
//! 2m and 2m−1 downsample to m.

use crate::error::{Error, Result};
use crate::tensor::{Shape5, Tensor5};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvKind {
    Standard,
    Depthwise,
    Pointwise,
    Transposed,
}

/// Validated description of one convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kind: ConvKind,
    pub kernel: usize,
    pub stride: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub bias: bool,
}

impl ConvSpec {
    pub fn new(
        kind: ConvKind,
        kernel: usize,
        stride: usize,
        in_channels: usize,
        out_channels: usize,
        bias: bool,
    ) -> Result<Self> {
        if kernel == 0 || kernel.is_multiple_of(2) {
            return Err(Error::ShapeMismatch(format!(
                "kernel must be odd and positive for symmetric padding, got {kernel}"
            )));
        }
        if !(stride == 1 || stride == 2) {
            return Err(Error::ShapeMismatch(format!(
                "stride must be 1 or 2, got {stride}"
            )));
        }
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::ShapeMismatch("zero channel count".into()));
        }
        match kind {
            ConvKind::Depthwise if out_channels != in_channels => {
                return Err(Error::ShapeMismatch(format!(
                    "depthwise requires out_channels = in_channels, got {in_channels} -> {out_channels}"
                )));
            }
            ConvKind::Pointwise if kernel != 1 => {
                return Err(Error::ShapeMismatch(format!(
                    "pointwise requires kernel 1, got {kernel}"
                )));
            }
            _ => {}
        }
        Ok(ConvSpec {
            kind,
            kernel,
            stride,
            in_channels,
            out_channels,
            bias,
        })
    }

    pub fn padding(&self) -> usize {
        (self.kernel - 1) / 2
    }

    /// Shape of the weight tensor: (C_out, C_in, k, k, k) for direct kinds
    /// — with the depthwise per-channel axis collapsed to 1 — and
    /// (C_in, C_out, k, k, k) for transposed.
    pub fn weight_shape(&self) -> Shape5 {
        let k = self.kernel;
        match self.kind {
            ConvKind::Standard => Shape5::new(self.out_channels, self.in_channels, k, k, k),
            ConvKind::Depthwise => Shape5::new(self.out_channels, 1, k, k, k),
            ConvKind::Pointwise => Shape5::new(self.out_channels, self.in_channels, 1, 1, 1),
            ConvKind::Transposed => Shape5::new(self.in_channels, self.out_channels, k, k, k),
        }
    }

    /// Number of inputs feeding one output unit: C_in · k³.
    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel.pow(3)
    }

    /// Learnable parameter count. Weight counts realize the k³·C_in·C_out
    /// family: standard k³·C_in·C_out, depthwise k³·C, pointwise
    /// C_in·C_out.
    pub fn parameter_count(&self) -> usize {
        self.weight_shape().len() + if self.bias { self.out_channels } else { 0 }
    }

    fn out_spatial(&self, d: usize, h: usize, w: usize) -> (usize, usize, usize) {
        let s = self.stride;
        (d.div_ceil(s), h.div_ceil(s), w.div_ceil(s))
    }
}

/// Saved forward context: the input values and the produced output shape.
#[derive(Debug, Clone)]
pub struct ConvCtx {
    input: Vec<f64>,
    input_shape: Shape5,
    out_shape: Shape5,
}

/// One convolution layer owning its parameters and their gradients.
#[derive(Debug, Clone)]
pub struct Conv3d {
    pub spec: ConvSpec,
    pub weight: Tensor5,
    pub bias: Option<Tensor5>,
}

impl Conv3d {
    /// Zero-initialized layer; see `init` for the Gaussian fill.
    pub fn new(spec: ConvSpec) -> Self {
        let bias = spec
            .bias
            .then(|| Tensor5::zeros(Shape5::new(1, spec.out_channels, 1, 1, 1)));
        Conv3d {
            spec,
            weight: Tensor5::zeros(spec.weight_shape()),
            bias,
        }
    }

    pub fn with_weights(spec: ConvSpec, weights: Vec<f64>, bias: Option<Vec<f64>>) -> Result<Self> {
        let weight = Tensor5::from_vec(spec.weight_shape(), weights)?;
        let bias = match (spec.bias, bias) {
            (true, Some(b)) => Some(Tensor5::from_vec(
                Shape5::new(1, spec.out_channels, 1, 1, 1),
                b,
            )?),
            (false, None) => None,
            (true, None) => {
                return Err(Error::ShapeMismatch("spec has bias but none given".into()))
            }
            (false, Some(_)) => {
                return Err(Error::ShapeMismatch("spec has no bias but one given".into()))
            }
        };
        Ok(Conv3d { spec, weight, bias })
    }

    pub fn parameter_count(&self) -> usize {
        self.spec.parameter_count()
    }

    fn check_input(&self, x: &Tensor5) -> Result<()> {
        if x.shape().c != self.spec.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "input has {} channels, spec wants {}",
                x.shape().c,
                self.spec.in_channels
            )));
        }
        Ok(())
    }

    /// Forward pass. For transposed convolution the output doubles each
    /// spatial axis; use [`Conv3d::forward_to`] to restore odd sizes.
    pub fn forward(&self, x: &Tensor5) -> Result<(Tensor5, ConvCtx)> {
        match self.spec.kind {
            ConvKind::Transposed => {
                let (d, h, w) = x.shape().spatial();
                let s = self.spec.stride;
                self.forward_to(x, (d * s, h * s, w * s))
            }
            _ => {
                self.check_input(x)?;
                let (d, h, w) = x.shape().spatial();
                let (od, oh, ow) = self.spec.out_spatial(d, h, w);
                let out_shape = Shape5::new(x.shape().n, self.spec.out_channels, od, oh, ow);
                Ok(self.run_forward(x, out_shape))
            }
        }
    }

    /// Transposed forward with explicit output spatial dims, which must map
    /// back to the input dims under the stride (ceil division).
    pub fn forward_to(&self, x: &Tensor5, spatial: (usize, usize, usize)) -> Result<(Tensor5, ConvCtx)> {
        if self.spec.kind != ConvKind::Transposed {
            return Err(Error::ShapeMismatch(
                "explicit output dims only apply to transposed convolution".into(),
            ));
        }
        self.check_input(x)?;
        let (d, h, w) = x.shape().spatial();
        let s = self.spec.stride;
        let wants = |out: usize, inp: usize| out.div_ceil(s) == inp;
        if !(wants(spatial.0, d) && wants(spatial.1, h) && wants(spatial.2, w)) {
            return Err(Error::ShapeMismatch(format!(
                "output dims {spatial:?} do not downsample back to input dims ({d}, {h}, {w}) at stride {s}"
            )));
        }
        let out_shape = Shape5::new(
            x.shape().n,
            self.spec.out_channels,
            spatial.0,
            spatial.1,
            spatial.2,
        );
        Ok(self.run_forward(x, out_shape))
    }

    fn run_forward(&self, x: &Tensor5, out_shape: Shape5) -> (Tensor5, ConvCtx) {
        let mut y = Tensor5::zeros(out_shape);
        {
            let ydata = y.data_mut();
            let xdata = x.data();
            let wdata = self.weight.data();
            self.for_each_contribution(x.shape(), out_shape, |yi, xi, wi| {
                ydata[yi] += xdata[xi] * wdata[wi];
            });
            if let Some(bias) = &self.bias {
                let b = bias.data();
                for n in 0..out_shape.n {
                    for (c, &bc) in b.iter().enumerate() {
                        let base = out_shape.index(n, c, 0, 0, 0);
                        for i in 0..out_shape.spatial_len() {
                            ydata[base + i] += bc;
                        }
                    }
                }
            }
        }
        y.debug_check_finite("conv3d forward");
        let ctx = ConvCtx {
            input: x.data().to_vec(),
            input_shape: x.shape(),
            out_shape,
        };
        (y, ctx)
    }

    /// Exact adjoint: returns grad wrt the input and accumulates parameter
    /// gradients into the layer's grad buffers.
    pub fn backward(&mut self, ctx: &ConvCtx, grad_out: &Tensor5) -> Result<Tensor5> {
        if grad_out.shape() != ctx.out_shape {
            return Err(Error::ContextMismatch(format!(
                "grad_out shape {:?} does not match forward output {:?}",
                grad_out.shape(),
                ctx.out_shape
            )));
        }
        if ctx.input_shape.c != self.spec.in_channels || ctx.out_shape.c != self.spec.out_channels
        {
            return Err(Error::ContextMismatch(
                "context channels do not match this layer".into(),
            ));
        }

        let mut gx = Tensor5::zeros(ctx.input_shape);
        {
            let gxdata = gx.data_mut();
            let gydata = grad_out.data();
            let wdata = self.weight.data();
            // First pass: input gradient (immutable weight access).
            self.for_each_contribution(ctx.input_shape, ctx.out_shape, |yi, xi, wi| {
                gxdata[xi] += gydata[yi] * wdata[wi];
            });
        }
        {
            // Second pass: weight gradient.
            let spec = self.spec;
            let gw = self.weight.grad_mut();
            let gydata = grad_out.data();
            for_each_contribution_spec(spec, ctx.input_shape, ctx.out_shape, |yi, xi, wi| {
                gw[wi] += gydata[yi] * ctx.input[xi];
            });
        }
        if let Some(bias) = &mut self.bias {
            let gb = bias.grad_mut();
            let gy = grad_out.data();
            let os = ctx.out_shape;
            for n in 0..os.n {
                for (c, gbc) in gb.iter_mut().enumerate() {
                    let base = os.index(n, c, 0, 0, 0);
                    for i in 0..os.spatial_len() {
                        *gbc += gy[base + i];
                    }
                }
            }
        }
        Ok(gx)
    }

    fn for_each_contribution(
        &self,
        x_shape: Shape5,
        y_shape: Shape5,
        visit: impl FnMut(usize, usize, usize),
    ) {
        for_each_contribution_spec(self.spec, x_shape, y_shape, visit);
    }
}

/// Enumerates every (output, input, weight) index triple of the convolution
/// sum y[o] += x[i]·w[k]; forward and both backward passes share this single
/// definition of the map, so the adjoint is exact by construction.
fn for_each_contribution_spec(
    spec: ConvSpec,
    x_shape: Shape5,
    y_shape: Shape5,
    mut visit: impl FnMut(usize, usize, usize),
) {
    let k = spec.kernel;
    let s = spec.stride;
    let p = spec.padding() as isize;
    let w_shape = spec.weight_shape();

    match spec.kind {
        ConvKind::Standard | ConvKind::Depthwise | ConvKind::Pointwise => {
            let per_channel = spec.kind == ConvKind::Depthwise;
            for n in 0..y_shape.n {
                for co in 0..y_shape.c {
                    let ci_range = if per_channel { co..co + 1 } else { 0..x_shape.c };
                    for od in 0..y_shape.d {
                        for oh in 0..y_shape.h {
                            for ow in 0..y_shape.w {
                                let yi = y_shape.index(n, co, od, oh, ow);
                                for ci in ci_range.clone() {
                                    let wc = if per_channel { 0 } else { ci };
                                    for kd in 0..k {
                                        let id = (od * s + kd) as isize - p;
                                        if id < 0 || id >= x_shape.d as isize {
                                            continue;
                                        }
                                        for kh in 0..k {
                                            let ih = (oh * s + kh) as isize - p;
                                            if ih < 0 || ih >= x_shape.h as isize {
                                                continue;
                                            }
                                            for kw in 0..k {
                                                let iw = (ow * s + kw) as isize - p;
                                                if iw < 0 || iw >= x_shape.w as isize {
                                                    continue;
                                                }
                                                let xi = x_shape.index(
                                                    n,
                                                    ci,
                                                    id as usize,
                                                    ih as usize,
                                                    iw as usize,
                                                );
                                                let wi = w_shape.index(co, wc, kd, kh, kw);
                                                visit(yi, xi, wi);
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        ConvKind::Transposed => {
            // Adjoint placement: input voxel i scatters to o = i·s + κ − p.
            for n in 0..x_shape.n {
                for ci in 0..x_shape.c {
                    for id in 0..x_shape.d {
                        for ih in 0..x_shape.h {
                            for iw in 0..x_shape.w {
                                let xi = x_shape.index(n, ci, id, ih, iw);
                                for co in 0..y_shape.c {
                                    for kd in 0..k {
                                        let od = (id * s + kd) as isize - p;
                                        if od < 0 || od >= y_shape.d as isize {
                                            continue;
                                        }
                                        for kh in 0..k {
                                            let oh = (ih * s + kh) as isize - p;
                                            if oh < 0 || oh >= y_shape.h as isize {
                                                continue;
                                            }
                                            for kw in 0..k {
                                                let ow = (iw * s + kw) as isize - p;
                                                if ow < 0 || ow >= y_shape.w as isize {
                                                    continue;
                                                }
                                                let yi = y_shape.index(
                                                    n,
                                                    co,
                                                    od as usize,
                                                    oh as usize,
                                                    ow as usize,
                                                );
                                                let wi = w_shape.index(ci, co, kd, kh, kw);
                                                visit(yi, xi, wi);
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(kind: ConvKind, k: usize, s: usize, cin: usize, cout: usize) -> ConvSpec {
        ConvSpec::new(kind, k, s, cin, cout, false).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(ConvSpec::new(ConvKind::Standard, 2, 1, 1, 1, false).is_err()); // even kernel
        assert!(ConvSpec::new(ConvKind::Standard, 3, 3, 1, 1, false).is_err()); // stride 3
        assert!(ConvSpec::new(ConvKind::Depthwise, 3, 1, 4, 8, false).is_err());
        assert!(ConvSpec::new(ConvKind::Pointwise, 3, 1, 4, 8, false).is_err());
        assert!(ConvSpec::new(ConvKind::Depthwise, 3, 1, 4, 4, false).is_ok());
        assert!(ConvSpec::new(ConvKind::Pointwise, 1, 1, 4, 8, false).is_ok());
    }

    #[test]
    fn parameter_count_formulas() {
        assert_eq!(spec(ConvKind::Standard, 3, 1, 2, 4).parameter_count(), 216);
        let separable = spec(ConvKind::Depthwise, 3, 1, 2, 2).parameter_count()
            + spec(ConvKind::Pointwise, 1, 1, 2, 4).parameter_count();
        assert_eq!(separable, 62);
        assert_eq!(
            spec(ConvKind::Standard, 3, 1, 32, 64).parameter_count(),
            55296
        );
        assert_eq!(
            spec(ConvKind::Standard, 3, 1, 32, 32).parameter_count(),
            27648
        );
        let sep32 = spec(ConvKind::Depthwise, 3, 1, 32, 32).parameter_count()
            + spec(ConvKind::Pointwise, 1, 1, 32, 32).parameter_count();
        assert_eq!(sep32, 1888);
        // Bias adds one scalar per output channel.
        assert_eq!(
            ConvSpec::new(ConvKind::Standard, 3, 1, 2, 4, true)
                .unwrap()
                .parameter_count(),
            220
        );
    }

    #[test]
    fn identity_pointwise_is_identity_in_both_directions() {
        let sp = spec(ConvKind::Pointwise, 1, 1, 3, 3);
        let mut eye = vec![0.0; 9];
        for c in 0..3 {
            eye[c * 3 + c] = 1.0;
        }
        let mut conv = Conv3d::with_weights(sp, eye, None).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let shape = Shape5::new(2, 3, 2, 2, 2);
        let x = Tensor5::from_vec(
            shape,
            (0..shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let (y, ctx) = conv.forward(&x).unwrap();
        assert_eq!(y.data(), x.data());

        let gy = Tensor5::from_vec(
            shape,
            (0..shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let gx = conv.backward(&ctx, &gy).unwrap();
        assert_eq!(gx.data(), gy.data());
    }

    #[test]
    fn single_voxel_k1_identity_weight() {
        let sp = spec(ConvKind::Standard, 1, 1, 1, 1);
        let conv = Conv3d::with_weights(sp, vec![1.0], None).unwrap();
        let x = Tensor5::from_vec(Shape5::new(1, 1, 1, 1, 1), vec![0.75]).unwrap();
        let (y, _) = conv.forward(&x).unwrap();
        assert_eq!(y.data(), &[0.75]);
    }

    #[test]
    fn hand_convolution_along_one_axis() {
        // Effective 1D conv: weight [a, b, c] = [1, 10, 100] over x = [1, 2, 3].
        let sp = spec(ConvKind::Standard, 3, 1, 1, 1);
        let mut w = vec![0.0; 27];
        let ws = sp.weight_shape();
        w[ws.index(0, 0, 1, 1, 0)] = 1.0;
        w[ws.index(0, 0, 1, 1, 1)] = 10.0;
        w[ws.index(0, 0, 1, 1, 2)] = 100.0;
        let conv = Conv3d::with_weights(sp, w, None).unwrap();
        let x = Tensor5::from_vec(Shape5::new(1, 1, 1, 1, 3), vec![1.0, 2.0, 3.0]).unwrap();
        let (y, _) = conv.forward(&x).unwrap();
        assert_eq!(y.data(), &[210.0, 321.0, 32.0]);
    }

    #[test]
    fn depthwise_channels_stay_independent() {
        let sp = spec(ConvKind::Depthwise, 3, 1, 2, 2);
        let ws = sp.weight_shape();
        let mut w = vec![0.0; ws.len()];
        // Channel 0: identity tap. Channel 1: doubling tap.
        w[ws.index(0, 0, 1, 1, 1)] = 1.0;
        w[ws.index(1, 0, 1, 1, 1)] = 2.0;
        let conv = Conv3d::with_weights(sp, w, None).unwrap();
        let shape = Shape5::new(1, 2, 1, 1, 2);
        let x = Tensor5::from_vec(shape, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, _) = conv.forward(&x).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 6.0, 8.0]);
    }

    #[test]
    fn stride_two_dims_are_ceil_halved() {
        let sp = spec(ConvKind::Standard, 3, 2, 1, 1);
        let conv = Conv3d::new(sp);
        for (input, expect) in [(5usize, 3usize), (8, 4), (1, 1), (7, 4)] {
            let x = Tensor5::zeros(Shape5::new(1, 1, input, input, input));
            let (y, _) = conv.forward(&x).unwrap();
            assert_eq!(y.shape().spatial(), (expect, expect, expect));
        }
    }

    #[test]
    fn transposed_restores_odd_dims_with_explicit_target() {
        let down = Conv3d::new(spec(ConvKind::Standard, 3, 2, 1, 1));
        let up = Conv3d::new(spec(ConvKind::Transposed, 3, 2, 1, 1));

        let x = Tensor5::zeros(Shape5::new(1, 1, 5, 7, 9));
        let (mid, _) = down.forward(&x).unwrap();
        assert_eq!(mid.shape().spatial(), (3, 4, 5));

        let (restored, _) = up.forward_to(&mid, (5, 7, 9)).unwrap();
        assert_eq!(restored.shape().spatial(), (5, 7, 9));

        // 6 also ceil-halves to 3, so it is accepted; 7 does not.
        assert!(up.forward_to(&mid, (6, 7, 9)).is_ok());
        assert!(up.forward_to(&mid, (7, 7, 9)).is_err());
    }

    #[test]
    fn separable_matches_rank1_standard_conv() {
        // A standard kernel K[co][ci][κ] = m[co][ci] · s[κ] factors exactly
        // into depthwise(s on every channel) followed by pointwise(m).
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (cin, cout, k) = (3usize, 4usize, 3usize);
        let spatial: Vec<f64> = (0..k * k * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mix: Vec<f64> = (0..cout * cin).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let std_spec = spec(ConvKind::Standard, k, 1, cin, cout);
        let ws = std_spec.weight_shape();
        let mut wstd = vec![0.0; ws.len()];
        for co in 0..cout {
            for ci in 0..cin {
                for (t, &sv) in spatial.iter().enumerate() {
                    let (kd, kh, kw) = (t / (k * k), (t / k) % k, t % k);
                    wstd[ws.index(co, ci, kd, kh, kw)] = mix[co * cin + ci] * sv;
                }
            }
        }
        let standard = Conv3d::with_weights(std_spec, wstd, None).unwrap();

        let dw_spec = spec(ConvKind::Depthwise, k, 1, cin, cin);
        let dws = dw_spec.weight_shape();
        let mut wdw = vec![0.0; dws.len()];
        for c in 0..cin {
            for (t, &sv) in spatial.iter().enumerate() {
                let (kd, kh, kw) = (t / (k * k), (t / k) % k, t % k);
                wdw[dws.index(c, 0, kd, kh, kw)] = sv;
            }
        }
        let depthwise = Conv3d::with_weights(dw_spec, wdw, None).unwrap();
        let pointwise =
            Conv3d::with_weights(spec(ConvKind::Pointwise, 1, 1, cin, cout), mix, None).unwrap();

        let shape = Shape5::new(2, cin, 4, 4, 4);
        let x = Tensor5::from_vec(
            shape,
            (0..shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();

        let (direct, _) = standard.forward(&x).unwrap();
        let (mid, _) = depthwise.forward(&x).unwrap();
        let (factored, _) = pointwise.forward(&mid).unwrap();

        assert_eq!(direct.shape(), factored.shape());
        for (a, b) in direct.data().iter().zip(factored.data()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_grads() {
        let sp = spec(ConvKind::Standard, 3, 1, 2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut conv = Conv3d::with_weights(
            sp,
            (0..sp.weight_shape().len())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
            None,
        )
        .unwrap();
        let shape = Shape5::new(1, 2, 3, 3, 3);
        let x = Tensor5::from_vec(
            shape,
            (0..shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let (y, ctx) = conv.forward(&x).unwrap();
        let gy = Tensor5::zeros(y.shape());
        let gx = conv.backward(&ctx, &gy).unwrap();
        assert!(gx.data().iter().all(|&v| v == 0.0));
        assert!(conv.weight.grad().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_foreign_context() {
        let sp = spec(ConvKind::Standard, 3, 1, 1, 1);
        let mut conv = Conv3d::new(sp);
        let x = Tensor5::zeros(Shape5::new(1, 1, 2, 2, 2));
        let (_, ctx) = conv.forward(&x).unwrap();
        let wrong = Tensor5::zeros(Shape5::new(1, 1, 3, 3, 3));
        assert!(matches!(
            conv.backward(&ctx, &wrong),
            Err(Error::ContextMismatch(_))
        ));
    }
}
