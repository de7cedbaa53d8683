//! Dense 3D voxel containers with anisotropic spacing, plus the intensity
//! and geometry operations every other module builds on.
//!
//! Memory layout is fixed x-fastest: `index = x + nx * (y + ny * z)`, which
//! matches the NIfTI-1 on-disk order so I/O stays copy-free.

use crate::error::{Error, Result};

/// Millimeters per voxel along each axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spacing {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl Spacing {
    pub fn new(dx: f64, dy: f64, dz: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(dx) && ok(dy) && ok(dz) {
            Ok(Spacing { dx, dy, dz })
        } else {
            Err(Error::InvalidSpacing(dx, dy, dz))
        }
    }

    pub fn isotropic(s: f64) -> Result<Self> {
        Spacing::new(s, s, s)
    }

    /// Physical volume of one voxel in mm3.
    pub fn voxel_volume(&self) -> f64 {
        self.dx * self.dy * self.dz
    }
}

/// Grid dimensions (number of voxels along x, y, z).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::DimsMismatch(format!(
                "dims must be positive, got ({nx}, {ny}, {nz})"
            )));
        }
        Ok(Dims { nx, ny, nz })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index of voxel (x, y, z), x-fastest.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.nx && y < self.ny && z < self.nz);
        x + self.nx * (y + self.ny * z)
    }

    /// Inverse of [`Dims::index`].
    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let x = idx % self.nx;
        let y = (idx / self.nx) % self.ny;
        let z = idx / (self.nx * self.ny);
        (x, y, z)
    }

    #[inline]
    pub fn contains(&self, x: isize, y: isize, z: isize) -> bool {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < self.nx
            && (y as usize) < self.ny
            && (z as usize) < self.nz
    }

    /// Linear index for signed coordinates, `None` when off the grid.
    #[inline]
    pub fn checked_index(&self, x: isize, y: isize, z: isize) -> Option<usize> {
        if self.contains(x, y, z) {
            Some(self.index(x as usize, y as usize, z as usize))
        } else {
            None
        }
    }
}

/// Dense 3D scalar field: one MRI modality or one probability map.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    dims: Dims,
    spacing: Spacing,
    data: Vec<f64>,
}

impl VoxelGrid {
    /// Builds a grid, validating the buffer length and that every value is
    /// finite.
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::DataLength {
                nx: dims.nx,
                ny: dims.ny,
                nz: dims.nz,
                expected: dims.len(),
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(VoxelGrid { dims, spacing, data })
    }

    pub fn zeros(dims: Dims, spacing: Spacing) -> Self {
        VoxelGrid {
            dims,
            spacing,
            data: vec![0.0; dims.len()],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.dims.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f64) {
        let i = self.dims.index(x, y, z);
        self.data[i] = v;
    }

    /// Interprets the grid as a binary mask: strictly positive means
    /// foreground.
    pub fn foreground(&self) -> Vec<bool> {
        self.data.iter().map(|&v| v > 0.0).collect()
    }
}

/// Dense 3D integer field over segmentation labels {0..=4}.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    dims: Dims,
    spacing: Spacing,
    data: Vec<u8>,
}

impl LabelVolume {
    pub const MAX_LABEL: u8 = 4;

    pub fn new(dims: Dims, spacing: Spacing, data: Vec<u8>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::DataLength {
                nx: dims.nx,
                ny: dims.ny,
                nz: dims.nz,
                expected: dims.len(),
                got: data.len(),
            });
        }
        if let Some(&bad) = data.iter().find(|&&v| v > Self::MAX_LABEL) {
            return Err(Error::InvalidLabel(bad));
        }
        Ok(LabelVolume { dims, spacing, data })
    }

    pub fn zeros(dims: Dims, spacing: Spacing) -> Self {
        LabelVolume {
            dims,
            spacing,
            data: vec![0; dims.len()],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.data[self.dims.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: u8) {
        debug_assert!(v <= Self::MAX_LABEL);
        let i = self.dims.index(x, y, z);
        self.data[i] = v;
    }

    /// Binary mask (1.0 / 0.0) of voxels carrying exactly `label`.
    pub fn class_mask(&self, label: u8) -> VoxelGrid {
        let data = self
            .data
            .iter()
            .map(|&v| if v == label { 1.0 } else { 0.0 })
            .collect();
        VoxelGrid {
            dims: self.dims,
            spacing: self.spacing,
            data,
        }
    }

    /// Binary mask of voxels whose label is in `labels`.
    pub fn union_mask(&self, labels: &[u8]) -> VoxelGrid {
        let data = self
            .data
            .iter()
            .map(|&v| if labels.contains(&v) { 1.0 } else { 0.0 })
            .collect();
        VoxelGrid {
            dims: self.dims,
            spacing: self.spacing,
            data,
        }
    }
}

/// Mapping from tumor subregions to integer labels, so a dataset with a
/// different encoding can be injected. Defaults: 1=enhancing, 2=non-enhancing,
/// 3=cystic, 4=edema.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelEncoding {
    pub enhancing: u8,
    pub non_enhancing: u8,
    pub cystic: u8,
    pub edema: u8,
}

impl Default for LabelEncoding {
    fn default() -> Self {
        LabelEncoding {
            enhancing: 1,
            non_enhancing: 2,
            cystic: 3,
            edema: 4,
        }
    }
}

impl LabelEncoding {
    /// Labels composing the tumor core: enhancing + non-enhancing + cystic.
    pub fn tumor_core(&self) -> [u8; 3] {
        [self.enhancing, self.non_enhancing, self.cystic]
    }

    /// Labels composing the whole tumor: tumor core + edema.
    pub fn whole_tumor(&self) -> [u8; 4] {
        [self.enhancing, self.non_enhancing, self.cystic, self.edema]
    }
}

/// Z-score normalization over all voxels, or over the nonzero foreground
/// when `foreground_only` is set (skull-stripped MRI has a zero background;
/// background voxels stay 0 in that mode).
///
/// A degenerate region (zero standard deviation) maps to all zeros.
pub fn zscore_normalize(grid: &VoxelGrid, foreground_only: bool) -> VoxelGrid {
    let region: Vec<usize> = if foreground_only {
        grid.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect()
    } else {
        (0..grid.data.len()).collect()
    };

    let mut out = VoxelGrid::zeros(grid.dims, grid.spacing);
    if region.is_empty() {
        return out;
    }

    let n = region.len() as f64;
    let mean = region.iter().map(|&i| grid.data[i]).sum::<f64>() / n;
    let var = region
        .iter()
        .map(|&i| {
            let d = grid.data[i] - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let std = var.sqrt();

    // Threshold absorbs the rounding noise a constant region leaves behind
    // (residual std of order |mean| * eps * sqrt(n)).
    if std <= mean.abs() * 1e-10 {
        return out;
    }

    for &i in &region {
        out.data[i] = (grid.data[i] - mean) / std;
    }
    out
}

/// Trilinear resampling to `target_dims` with corner-aligned sampling.
/// Spacing is rescaled so the physical extent (dims times spacing) is
/// preserved. Resampling to the source dims is the identity.
pub fn trilinear_resample(grid: &VoxelGrid, target_dims: Dims) -> VoxelGrid {
    let src = grid.dims;
    let dst = target_dims;

    let spacing = Spacing {
        dx: grid.spacing.dx * src.nx as f64 / dst.nx as f64,
        dy: grid.spacing.dy * src.ny as f64 / dst.ny as f64,
        dz: grid.spacing.dz * src.nz as f64 / dst.nz as f64,
    };

    // Corner-aligned source coordinate; a single-sample axis reads the center.
    let coord = |i: usize, m: usize, n: usize| -> f64 {
        if m == 1 {
            (n as f64 - 1.0) / 2.0
        } else {
            i as f64 * (n as f64 - 1.0) / (m as f64 - 1.0)
        }
    };

    let mut data = vec![0.0; dst.len()];
    for z in 0..dst.nz {
        let fz = coord(z, dst.nz, src.nz);
        let (z0, tz) = split(fz, src.nz);
        for y in 0..dst.ny {
            let fy = coord(y, dst.ny, src.ny);
            let (y0, ty) = split(fy, src.ny);
            for x in 0..dst.nx {
                let fx = coord(x, dst.nx, src.nx);
                let (x0, tx) = split(fx, src.nx);

                let x1 = (x0 + 1).min(src.nx - 1);
                let y1 = (y0 + 1).min(src.ny - 1);
                let z1 = (z0 + 1).min(src.nz - 1);

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

                data[dst.index(x, y, z)] = c0 + (c1 - c0) * tz;
            }
        }
    }

    VoxelGrid {
        dims: dst,
        spacing,
        data,
    }
}

/// Floor a source coordinate into (cell, fraction), clamped to the grid.
#[inline]
fn split(f: f64, n: usize) -> (usize, f64) {
    let clamped = f.clamp(0.0, n as f64 - 1.0);
    let i0 = clamped.floor() as usize;
    let i0 = i0.min(n - 1);
    (i0, clamped - i0 as f64)
}

/// Tumor-core and whole-tumor masks under the given label encoding.
pub fn composite_regions_with(
    labels: &LabelVolume,
    encoding: &LabelEncoding,
) -> (VoxelGrid, VoxelGrid) {
    let tc = labels.union_mask(&encoding.tumor_core());
    let wt = labels.union_mask(&encoding.whole_tumor());
    (tc, wt)
}

/// Tumor-core and whole-tumor masks under the default encoding
/// (TC = labels {1,2,3}, WT = labels {1,2,3,4}).
pub fn composite_regions(labels: &LabelVolume) -> (VoxelGrid, VoxelGrid) {
    composite_regions_with(labels, &LabelEncoding::default())
}
