//! Intensity augmentations: additive Gaussian noise, Gaussian blur,
//! multiplicative brightness and contrast, and gamma correction.
//!
//! Every transform returns a new grid of the same dimensions. Neutral
//! parameters short-circuit to an exact copy so the identity is bit-exact,
//! and neutral transforms consume no random draws.

use pedseg_core::VoxelGrid;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Adds i.i.d. zero-mean Gaussian noise with the given variance.
///
/// A variance of zero (or below) is the identity and draws nothing.
pub fn gaussian_noise<R: Rng>(grid: &VoxelGrid, variance: f64, rng: &mut R) -> VoxelGrid {
    if variance <= 0.0 {
        return grid.clone();
    }
    let normal = Normal::new(0.0, variance.sqrt()).expect("finite standard deviation");
    let mut out = grid.clone();
    for v in out.data_mut() {
        *v += normal.sample(rng);
    }
    out
}

/// Convolves with a separable Gaussian kernel truncated at three standard
/// deviations. Taps falling outside the volume are dropped and the kernel is
/// renormalized over the in-bounds support, so a constant volume stays
/// constant and borders are not biased toward zero. A sigma of zero (or
/// below) is the identity.
pub fn gaussian_blur(grid: &VoxelGrid, sigma: f64) -> VoxelGrid {
    if sigma <= 0.0 {
        return grid.clone();
    }
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let weights: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();

    let dims = grid.dims();
    let strides = [1isize, dims.nx as isize, (dims.nx * dims.ny) as isize];
    let extents = [dims.nx as isize, dims.ny as isize, dims.nz as isize];

    let mut data = grid.data().to_vec();
    let mut scratch = vec![0.0; data.len()];
    for axis in 0..3 {
        blur_axis(
            &data,
            &mut scratch,
            dims.len(),
            strides[axis],
            extents[axis],
            radius,
            &weights,
        );
        std::mem::swap(&mut data, &mut scratch);
    }
    VoxelGrid::new(dims, grid.spacing(), data).expect("blur preserves length and finiteness")
}

/// One separable pass along the axis with the given stride and extent.
fn blur_axis(
    src: &[f64],
    dst: &mut [f64],
    len: usize,
    stride: isize,
    extent: isize,
    radius: isize,
    weights: &[f64],
) {
    for i in 0..len {
        // Position of voxel i along this axis.
        let along = (i as isize / stride) % extent;
        let lo = (-radius).max(-along);
        let hi = radius.min(extent - 1 - along);
        let mut acc = 0.0;
        let mut norm = 0.0;
        for k in lo..=hi {
            let w = weights[(k + radius) as usize];
            acc += w * src[(i as isize + k * stride) as usize];
            norm += w;
        }
        dst[i] = acc / norm;
    }
}

/// Multiplies every voxel by `multiplier`. A multiplier of one is the
/// identity.
pub fn brightness(grid: &VoxelGrid, multiplier: f64) -> VoxelGrid {
    if multiplier == 1.0 {
        return grid.clone();
    }
    let mut out = grid.clone();
    for v in out.data_mut() {
        *v *= multiplier;
    }
    out
}

/// Rescales the deviation from the spatial mean: `mean + (x - mean) * c`.
/// The spatial mean itself is preserved. A multiplier of one is the
/// identity.
pub fn contrast(grid: &VoxelGrid, multiplier: f64) -> VoxelGrid {
    if multiplier == 1.0 {
        return grid.clone();
    }
    let mean = grid.data().iter().sum::<f64>() / grid.data().len() as f64;
    let mut out = grid.clone();
    for v in out.data_mut() {
        *v = mean + (*v - mean) * multiplier;
    }
    out
}

/// Gamma correction: rescales intensities to `[0, 1]`, applies the power
/// `gamma`, and rescales back to the original range. With `inverted` the
/// power is applied to the intensity-inverted volume (`1 - u`) and inverted
/// back, which darkens in the opposite direction.
///
/// A gamma of one is the identity. A degenerate intensity range
/// (`max == min`) leaves nothing to rescale and is also the identity.
pub fn gamma_correct(grid: &VoxelGrid, gamma: f64, inverted: bool) -> Result<VoxelGrid> {
    if !gamma.is_finite() || gamma <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "gamma must be a positive finite real, got {gamma}"
        )));
    }
    if gamma == 1.0 {
        return Ok(grid.clone());
    }
    let min = grid.data().iter().copied().fold(f64::INFINITY, f64::min);
    let max = grid
        .data()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if range == 0.0 {
        return Ok(grid.clone());
    }
    let mut out = grid.clone();
    for v in out.data_mut() {
        let mut u = (*v - min) / range;
        if inverted {
            u = 1.0 - u;
        }
        let mut p = u.powf(gamma);
        if inverted {
            p = 1.0 - p;
        }
        *v = min + p * range;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use pedseg_core::{Dims, Spacing};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(nx: usize, ny: usize, nz: usize, data: Vec<f64>) -> VoxelGrid {
        VoxelGrid::new(
            Dims::new(nx, ny, nz).unwrap(),
            Spacing::isotropic(1.0).unwrap(),
            data,
        )
        .unwrap()
    }

    #[test]
    fn zero_variance_noise_is_identity() {
        let g = grid(2, 2, 2, vec![0.5; 8]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(gaussian_noise(&g, 0.0, &mut rng), g);
    }

    #[test]
    fn noise_perturbs_with_roughly_the_requested_spread() {
        let n = 22 * 22 * 22;
        let g = grid(22, 22, 22, vec![0.0; n]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noisy = gaussian_noise(&g, 0.04, &mut rng);
        let var = noisy.data().iter().map(|v| v * v).sum::<f64>() / n as f64;
        assert!((var - 0.04).abs() < 0.005, "sample variance {var}");
    }

    #[test]
    fn zero_sigma_blur_is_identity() {
        let g = grid(3, 1, 1, vec![1.0, 2.0, 3.0]);
        assert_eq!(gaussian_blur(&g, 0.0), g);
    }

    #[test]
    fn blur_keeps_a_constant_volume_constant() {
        let g = grid(4, 3, 2, vec![2.5; 24]);
        let blurred = gaussian_blur(&g, 1.2);
        for &v in blurred.data() {
            assert!((v - 2.5).abs() < 1e-12, "constant drifted to {v}");
        }
    }

    #[test]
    fn blur_reduces_white_noise_variance() {
        let n = 22 * 22 * 22; // > 10^4 voxels
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let data: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let g = grid(22, 22, 22, data);
        let blurred = gaussian_blur(&g, 1.0);
        let var = |xs: &[f64]| {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
        };
        let before = var(g.data());
        let after = var(blurred.data());
        assert!(
            after < before * 0.5,
            "blur failed to smooth: {before} -> {after}"
        );
    }

    #[test]
    fn unit_brightness_and_contrast_are_identity() {
        let g = grid(2, 1, 1, vec![0.25, -1.5]);
        assert_eq!(brightness(&g, 1.0), g);
        assert_eq!(contrast(&g, 1.0), g);
    }

    #[test]
    fn brightness_scales_every_voxel() {
        let g = grid(2, 1, 1, vec![2.0, -4.0]);
        let out = brightness(&g, 0.5);
        assert_eq!(out.data(), &[1.0, -2.0]);
    }

    #[test]
    fn contrast_preserves_the_spatial_mean() {
        let g = grid(2, 2, 1, vec![1.0, 3.0, -2.0, 10.0]);
        let mean = g.data().iter().sum::<f64>() / 4.0;
        let out = contrast(&g, 1.8);
        let out_mean = out.data().iter().sum::<f64>() / 4.0;
        assert!((out_mean - mean).abs() < 1e-12);
    }

    #[test]
    fn contrast_stretches_deviations() {
        let g = grid(2, 1, 1, vec![0.0, 2.0]);
        let out = contrast(&g, 2.0); // mean 1, deviations ±1 -> ±2
        assert_eq!(out.data(), &[-1.0, 3.0]);
    }

    #[test]
    fn unit_gamma_is_identity() {
        let g = grid(3, 1, 1, vec![0.0, 0.5, 1.0]);
        assert_eq!(gamma_correct(&g, 1.0, false).unwrap(), g);
        assert_eq!(gamma_correct(&g, 1.0, true).unwrap(), g);
    }

    #[test]
    fn gamma_two_squares_normalized_intensities() {
        let g = grid(3, 1, 1, vec![0.0, 0.5, 1.0]);
        let out = gamma_correct(&g, 2.0, false).unwrap();
        assert_eq!(out.data(), &[0.0, 0.25, 1.0]);
    }

    #[test]
    fn inverted_gamma_acts_on_the_inverted_intensities() {
        let g = grid(3, 1, 1, vec![0.0, 0.5, 1.0]);
        // u=0.5 -> inverted 0.5 -> squared 0.25 -> inverted back 0.75.
        let out = gamma_correct(&g, 2.0, true).unwrap();
        assert_eq!(out.data(), &[0.0, 0.75, 1.0]);
    }

    #[test]
    fn gamma_respects_a_shifted_intensity_range() {
        let g = grid(3, 1, 1, vec![10.0, 15.0, 20.0]);
        let out = gamma_correct(&g, 2.0, false).unwrap();
        assert_eq!(out.data(), &[10.0, 12.5, 20.0]);
    }

    #[test]
    fn degenerate_range_gamma_is_identity() {
        let g = grid(2, 2, 1, vec![3.0; 4]);
        assert_eq!(gamma_correct(&g, 2.0, false).unwrap(), g);
    }

    #[test]
    fn nonpositive_gamma_is_rejected() {
        let g = grid(1, 1, 1, vec![0.0]);
        assert!(gamma_correct(&g, 0.0, false).is_err());
        assert!(gamma_correct(&g, -1.0, false).is_err());
        assert!(gamma_correct(&g, f64::NAN, false).is_err());
    }

    #[test]
    fn blur_is_symmetric_on_a_symmetric_impulse() {
        // Impulse at the center of an odd extent: the response must be
        // symmetric about it.
        let mut data = vec![0.0; 5];
        data[2] = 1.0;
        let g = grid(5, 1, 1, data);
        let out = gaussian_blur(&g, 0.8);
        assert!((out.data()[1] - out.data()[3]).abs() < 1e-15);
        assert!((out.data()[0] - out.data()[4]).abs() < 1e-15);
        assert!(out.data()[2] > out.data()[1]);
    }
}
