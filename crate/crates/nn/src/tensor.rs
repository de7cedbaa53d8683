//! Dense 5D tensor in (batch, channels, depth, height, width) layout — the
//! carrier for all block math, with a gradient buffer welded to the values.

use crate::error::{Error, Result};

/// Shape of a [`Tensor5`], width-fastest in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape5 {
    pub n: usize,
    pub c: usize,
    pub d: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape5 {
    pub fn new(n: usize, c: usize, d: usize, h: usize, w: usize) -> Self {
        Shape5 { n, c, d, h, w }
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.d * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Spatial dimensions (depth, height, width).
    pub fn spatial(&self) -> (usize, usize, usize) {
        (self.d, self.h, self.w)
    }

    pub fn spatial_len(&self) -> usize {
        self.d * self.h * self.w
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, d: usize, h: usize, w: usize) -> usize {
        debug_assert!(n < self.n && c < self.c && d < self.d && h < self.h && w < self.w);
        (((n * self.c + c) * self.d + d) * self.h + h) * self.w + w
    }
}

/// Values plus a same-shape gradient buffer.
///
/// The gradient buffer exists from construction so parameter tensors can
/// accumulate into it across backward calls; [`Tensor5::zero_grad`] resets
/// it between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor5 {
    shape: Shape5,
    data: Vec<f64>,
    grad: Vec<f64>,
}

impl Tensor5 {
    pub fn zeros(shape: Shape5) -> Self {
        Tensor5 {
            shape,
            data: vec![0.0; shape.len()],
            grad: vec![0.0; shape.len()],
        }
    }

    pub fn filled(shape: Shape5, value: f64) -> Self {
        Tensor5 {
            shape,
            data: vec![value; shape.len()],
            grad: vec![0.0; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape5, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "tensor data has {} entries, shape {:?} wants {}",
                data.len(),
                shape,
                shape.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch(format!(
                "non-finite value at flat index {pos}"
            )));
        }
        let grad = vec![0.0; data.len()];
        Ok(Tensor5 { shape, data, grad })
    }

    pub fn shape(&self) -> Shape5 {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        &mut self.grad
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, d: usize, h: usize, w: usize) -> f64 {
        self.data[self.shape.index(n, c, d, h, w)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, d: usize, h: usize, w: usize, v: f64) {
        let idx = self.shape.index(n, c, d, h, w);
        self.data[idx] = v;
    }

    /// Asserts the post-op invariant that every value is finite.
    pub fn debug_check_finite(&self, label: &str) {
        debug_assert!(
            self.data.iter().all(|v| v.is_finite()),
            "{label}: non-finite value"
        );
    }
}
