//! Spatial augmentations: axis flips, rotation-plus-scale resampling, and
//! low-resolution simulation.
//!
//! Paired image and label volumes must see the same geometry, so the random
//! part of each transform is split out as an explicit draw (`FlipDraw`,
//! `AffineDraw`) that is sampled once and then applied to both volumes.
//! Images are resampled trilinearly, label volumes by nearest neighbor so
//! they keep their original value set.

use pedseg_core::volume::trilinear_resample;
use pedseg_core::{Dims, LabelVolume, VoxelGrid};
use rand::Rng;

use crate::config::Range;
use crate::error::{Error, Result};

/// Coordinates this close to the valid cube are clamped instead of
/// zero-filled, so exact-identity transforms are not eroded at the faces by
/// floating-point noise.
const BOUNDS_SLACK: f64 = 1e-9;

/// One realization of the per-axis mirror flips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlipDraw {
    pub x: bool,
    pub y: bool,
    pub z: bool,
}

impl FlipDraw {
    /// The draw that flips nothing.
    pub const NONE: FlipDraw = FlipDraw {
        x: false,
        y: false,
        z: false,
    };

    pub fn is_identity(&self) -> bool {
        !(self.x || self.y || self.z)
    }
}

/// Samples one flip decision per axis, each with its own probability.
/// Probabilities are expected in `[0, 1]`; zero never flips, one always
/// does.
pub fn draw_flips<R: Rng>(probabilities: [f64; 3], rng: &mut R) -> FlipDraw {
    let mut flip = |p: f64| rng.gen::<f64>() < p;
    FlipDraw {
        x: flip(probabilities[0]),
        y: flip(probabilities[1]),
        z: flip(probabilities[2]),
    }
}

/// Mirrors the grid along the axes selected by `draw`.
pub fn flip_grid(grid: &VoxelGrid, draw: FlipDraw) -> VoxelGrid {
    if draw.is_identity() {
        return grid.clone();
    }
    let data = flip_buffer(grid.data(), grid.dims(), draw);
    VoxelGrid::new(grid.dims(), grid.spacing(), data).expect("flip preserves length")
}

/// Mirrors the label volume along the axes selected by `draw`.
pub fn flip_labels(labels: &LabelVolume, draw: FlipDraw) -> LabelVolume {
    if draw.is_identity() {
        return labels.clone();
    }
    let data = flip_buffer(labels.data(), labels.dims(), draw);
    LabelVolume::new(labels.dims(), labels.spacing(), data).expect("flip preserves labels")
}

fn flip_buffer<T: Copy>(src: &[T], dims: Dims, draw: FlipDraw) -> Vec<T> {
    let mut out = Vec::with_capacity(src.len());
    for z in 0..dims.nz {
        let sz = if draw.z { dims.nz - 1 - z } else { z };
        for y in 0..dims.ny {
            let sy = if draw.y { dims.ny - 1 - y } else { y };
            for x in 0..dims.nx {
                let sx = if draw.x { dims.nx - 1 - x } else { x };
                out.push(src[dims.index(sx, sy, sz)]);
            }
        }
    }
    out
}

/// One realization of the rotation-plus-scale transform: Euler angles in
/// degrees about the x, y, and z axes, composed with an isotropic scale
/// about the volume center (scale above one magnifies the content).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineDraw {
    pub rotation_degrees: [f64; 3],
    pub scale: f64,
}

impl AffineDraw {
    /// Zero rotation, unit scale.
    pub const NEUTRAL: AffineDraw = AffineDraw {
        rotation_degrees: [0.0; 3],
        scale: 1.0,
    };
}

/// Samples Euler angles uniformly from `rotation_degrees` (independently per
/// axis) and one isotropic scale from `scale`.
pub fn draw_affine<R: Rng>(rotation_degrees: Range, scale: Range, rng: &mut R) -> AffineDraw {
    AffineDraw {
        rotation_degrees: [
            rotation_degrees.sample(rng),
            rotation_degrees.sample(rng),
            rotation_degrees.sample(rng),
        ],
        scale: scale.sample(rng),
    }
}

/// 3x3 row-major rotation matrix for the draw's Euler angles, composed as
/// Rz * Ry * Rx.
fn rotation_matrix(degrees: [f64; 3]) -> [[f64; 3]; 3] {
    let [ax, ay, az] = degrees;
    let (sa, ca) = ax.to_radians().sin_cos();
    let (sb, cb) = ay.to_radians().sin_cos();
    let (sc, cc) = az.to_radians().sin_cos();
    let rx = [[1.0, 0.0, 0.0], [0.0, ca, -sa], [0.0, sa, ca]];
    let ry = [[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]];
    let rz = [[cc, -sc, 0.0], [sc, cc, 0.0], [0.0, 0.0, 1.0]];
    mat_mul(&mat_mul(&rz, &ry), &rx)
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Maps an output voxel back to its source coordinate: the inverse of
/// "rotate by R and scale by s about the center" is "unrotate by R^T and
/// divide by s about the center".
fn source_coordinate(
    out: [f64; 3],
    center: [f64; 3],
    rot: &[[f64; 3]; 3],
    scale: f64,
) -> [f64; 3] {
    let rel = [out[0] - center[0], out[1] - center[1], out[2] - center[2]];
    let mut src = [0.0; 3];
    for (axis, s) in src.iter_mut().enumerate() {
        // Transposed multiply: column `axis` of the forward rotation.
        *s = (rot[0][axis] * rel[0] + rot[1][axis] * rel[1] + rot[2][axis] * rel[2]) / scale
            + center[axis];
    }
    src
}

fn center_of(dims: Dims) -> [f64; 3] {
    [
        (dims.nx as f64 - 1.0) / 2.0,
        (dims.ny as f64 - 1.0) / 2.0,
        (dims.nz as f64 - 1.0) / 2.0,
    ]
}

/// Clamps a source coordinate into the valid cube, or reports it out of
/// bounds (beyond the slack) for zero fill.
fn clamp_coordinate(src: [f64; 3], dims: Dims) -> Option<[f64; 3]> {
    let extents = [dims.nx, dims.ny, dims.nz];
    let mut clamped = [0.0; 3];
    for axis in 0..3 {
        let hi = extents[axis] as f64 - 1.0;
        let v = src[axis];
        if v < -BOUNDS_SLACK || v > hi + BOUNDS_SLACK {
            return None;
        }
        clamped[axis] = v.clamp(0.0, hi);
    }
    Some(clamped)
}

/// Rotates and scales the grid about its center, resampling trilinearly.
/// Voxels whose source falls outside the volume are filled with zero.
pub fn affine_grid(grid: &VoxelGrid, draw: &AffineDraw) -> VoxelGrid {
    let dims = grid.dims();
    let rot = rotation_matrix(draw.rotation_degrees);
    let center = center_of(dims);

    let mut data = vec![0.0; dims.len()];
    for z in 0..dims.nz {
        for y in 0..dims.ny {
            for x in 0..dims.nx {
                let src = source_coordinate(
                    [x as f64, y as f64, z as f64],
                    center,
                    &rot,
                    draw.scale,
                );
                if let Some(s) = clamp_coordinate(src, dims) {
                    data[dims.index(x, y, z)] = sample_trilinear(grid, s);
                }
            }
        }
    }
    VoxelGrid::new(dims, grid.spacing(), data).expect("affine preserves length")
}

/// Rotates and scales the label volume about its center with
/// nearest-neighbor sampling, so the output contains only original label
/// values (plus zero fill).
pub fn affine_labels(labels: &LabelVolume, draw: &AffineDraw) -> LabelVolume {
    let dims = labels.dims();
    let rot = rotation_matrix(draw.rotation_degrees);
    let center = center_of(dims);

    let mut data = vec![0u8; dims.len()];
    for z in 0..dims.nz {
        for y in 0..dims.ny {
            for x in 0..dims.nx {
                let src = source_coordinate(
                    [x as f64, y as f64, z as f64],
                    center,
                    &rot,
                    draw.scale,
                );
                if let Some(s) = clamp_coordinate(src, dims) {
                    let nx = s[0].round() as usize;
                    let ny = s[1].round() as usize;
                    let nz = s[2].round() as usize;
                    data[dims.index(x, y, z)] = labels.get(nx, ny, nz);
                }
            }
        }
    }
    LabelVolume::new(dims, labels.spacing(), data).expect("affine preserves labels")
}

/// Trilinear read at a clamped in-bounds coordinate.
fn sample_trilinear(grid: &VoxelGrid, s: [f64; 3]) -> f64 {
    let dims = grid.dims();
    let (x0, tx) = floor_frac(s[0], dims.nx);
    let (y0, ty) = floor_frac(s[1], dims.ny);
    let (z0, tz) = floor_frac(s[2], dims.nz);
    let x1 = (x0 + 1).min(dims.nx - 1);
    let y1 = (y0 + 1).min(dims.ny - 1);
    let z1 = (z0 + 1).min(dims.nz - 1);

    let c000 = grid.get(x0, y0, z0);
    let c100 = grid.get(x1, y0, z0);
    let c010 = grid.get(x0, y1, z0);
    let c110 = grid.get(x1, y1, z0);
    let c001 = grid.get(x0, y0, z1);
    let c101 = grid.get(x1, y0, z1);
    let c011 = grid.get(x0, y1, z1);
    let c111 = grid.get(x1, y1, z1);

    let c00 = c000 + (c100 - c000) * tx;
    let c10 = c010 + (c110 - c010) * tx;
    let c01 = c001 + (c101 - c001) * tx;
    let c11 = c011 + (c111 - c011) * tx;
    let c0 = c00 + (c10 - c00) * ty;
    let c1 = c01 + (c11 - c01) * ty;
    c0 + (c1 - c0) * tz
}

#[inline]
fn floor_frac(v: f64, n: usize) -> (usize, f64) {
    let i = (v.floor() as usize).min(n - 1);
    (i, v - i as f64)
}

/// Simulates a low-resolution acquisition: trilinear downsample by `factor`
/// along every axis (at least one voxel per axis), then upsample back to the
/// original dimensions. A factor of one is the identity; the spacing is
/// unchanged.
pub fn simulate_low_resolution(grid: &VoxelGrid, factor: f64) -> Result<VoxelGrid> {
    if !factor.is_finite() || factor <= 0.0 || factor > 1.0 {
        return Err(Error::InvalidConfig(format!(
            "low-resolution factor must lie in (0, 1], got {factor}"
        )));
    }
    let dims = grid.dims();
    let shrink = |n: usize| (((n as f64) * factor).round() as usize).clamp(1, n);
    let small = Dims::new(shrink(dims.nx), shrink(dims.ny), shrink(dims.nz))
        .expect("shrunk dims stay positive");
    if small == dims {
        return Ok(grid.clone());
    }
    let down = trilinear_resample(grid, small);
    let up = trilinear_resample(&down, dims);
    Ok(VoxelGrid::new(dims, grid.spacing(), up.into_data())
        .expect("round trip preserves length"))
}
