//! Binary 3D morphology: connected components, box dilation, surface
//! extraction, and an exact Euclidean distance transform.
//!
//! All operations work on flat `&[bool]` masks indexed per [`Dims::index`]
//! and treat everything outside the grid as background.

use std::collections::BTreeMap;

use crate::volume::{Dims, LabelVolume, Spacing};

/// Voxel adjacency. `Six` links faces only; `TwentySix` links faces, edges,
/// and corners.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Six,
    TwentySix,
}

impl Connectivity {
    fn offsets(self) -> Vec<(isize, isize, isize)> {
        match self {
            Connectivity::Six => vec![
                (-1, 0, 0),
                (1, 0, 0),
                (0, -1, 0),
                (0, 1, 0),
                (0, 0, -1),
                (0, 0, 1),
            ],
            Connectivity::TwentySix => {
                let mut offs = Vec::with_capacity(26);
                for dz in -1isize..=1 {
                    for dy in -1isize..=1 {
                        for dx in -1isize..=1 {
                            if (dx, dy, dz) != (0, 0, 0) {
                                offs.push((dx, dy, dz));
                            }
                        }
                    }
                }
                offs
            }
        }
    }
}

/// One connected component: its voxels as ascending linear indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub voxels: Vec<usize>,
}

impl Component {
    pub fn voxel_count(&self) -> usize {
        self.voxels.len()
    }

    /// Physical volume in mm³.
    pub fn volume_mm3(&self, spacing: Spacing) -> f64 {
        self.voxels.len() as f64 * spacing.voxel_volume()
    }
}

/// Result of component labelling. Component ids start at 1 and are assigned
/// in scan order, so component k has the k-th smallest minimum linear index;
/// 0 marks background.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentLabeling {
    labels: Vec<u32>,
    components: Vec<Component>,
}

impl ComponentLabeling {
    pub fn count(&self) -> usize {
        self.components.len()
    }

    /// Component id (1-based) at a linear index, 0 for background.
    pub fn label_at(&self, idx: usize) -> u32 {
        self.labels[idx]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// The component with the given 1-based id.
    pub fn component(&self, id: u32) -> &Component {
        &self.components[id as usize - 1]
    }
}

/// Labels connected components of `mask` by flood fill in scan order.
pub fn connected_components(mask: &[bool], dims: Dims, conn: Connectivity) -> ComponentLabeling {
    assert_eq!(mask.len(), dims.len(), "mask length must match dims");
    let offsets = conn.offsets();
    let mut labels = vec![0u32; mask.len()];
    let mut components = Vec::new();
    let mut stack = Vec::new();

    for seed in 0..mask.len() {
        if !mask[seed] || labels[seed] != 0 {
            continue;
        }
        let id = components.len() as u32 + 1;
        let mut voxels = Vec::new();
        labels[seed] = id;
        stack.push(seed);
        while let Some(idx) = stack.pop() {
            voxels.push(idx);
            let (x, y, z) = dims.coords(idx);
            for &(dx, dy, dz) in &offsets {
                let nx = x as isize + dx;
                let ny = y as isize + dy;
                let nz = z as isize + dz;
                if let Some(nidx) = dims.checked_index(nx, ny, nz) {
                    if mask[nidx] && labels[nidx] == 0 {
                        labels[nidx] = id;
                        stack.push(nidx);
                    }
                }
            }
        }
        voxels.sort_unstable();
        components.push(Component { voxels });
    }

    ComponentLabeling { labels, components }
}

/// Binary dilation with the full 3×3×3 box (26-neighborhood plus center).
/// The structuring element is clipped at the grid border.
pub fn dilate(mask: &[bool], dims: Dims) -> Vec<bool> {
    assert_eq!(mask.len(), dims.len(), "mask length must match dims");
    let mut out = vec![false; mask.len()];
    for (idx, &inside) in mask.iter().enumerate() {
        if !inside {
            continue;
        }
        let (x, y, z) = dims.coords(idx);
        for dz in -1isize..=1 {
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if let Some(nidx) =
                        dims.checked_index(x as isize + dx, y as isize + dy, z as isize + dz)
                    {
                        out[nidx] = true;
                    }
                }
            }
        }
    }
    out
}

/// Surface voxels of a mask: foreground voxels with at least one 6-connected
/// background neighbor, where out-of-bounds counts as background.
pub fn boundary(mask: &[bool], dims: Dims) -> Vec<bool> {
    assert_eq!(mask.len(), dims.len(), "mask length must match dims");
    let offsets = Connectivity::Six.offsets();
    let mut out = vec![false; mask.len()];
    for (idx, &inside) in mask.iter().enumerate() {
        if !inside {
            continue;
        }
        let (x, y, z) = dims.coords(idx);
        out[idx] = offsets.iter().any(|&(dx, dy, dz)| {
            match dims.checked_index(x as isize + dx, y as isize + dy, z as isize + dz) {
                Some(nidx) => !mask[nidx],
                None => true,
            }
        });
    }
    out
}

/// Removes small connected components of the thresholded labels.
///
/// For each label with a configured mm³ threshold: its mask is dilated once
/// with the 3×3×3 box, the dilated mask is 26-labeled, original voxels are
/// grouped by the dilated component they fall in, and every group whose
/// undilated volume is below the threshold is zeroed. Dilation only merges
/// nearby fragments for grouping — volumes are always measured on the
/// undilated voxels, which would otherwise all be inflated past any
/// reasonable threshold. Labels without a threshold pass through untouched.
pub fn remove_small_components(
    labels: &LabelVolume,
    thresholds: &BTreeMap<u8, f64>,
) -> LabelVolume {
    remove_small_components_report(labels, thresholds).0
}

/// [`remove_small_components`] plus, per label, the mm³ volumes of the
/// groups that were removed.
pub fn remove_small_components_report(
    labels: &LabelVolume,
    thresholds: &BTreeMap<u8, f64>,
) -> (LabelVolume, BTreeMap<u8, Vec<f64>>) {
    let dims = labels.dims();
    let spacing = labels.spacing();
    let voxel_mm3 = spacing.voxel_volume();
    let mut out = labels.clone();
    let mut removed: BTreeMap<u8, Vec<f64>> = BTreeMap::new();

    for (&label, &min_mm3) in thresholds {
        assert!(
            min_mm3 >= 0.0,
            "volume threshold for label {label} must be nonnegative"
        );
        let mask: Vec<bool> = labels.data().iter().map(|&v| v == label).collect();
        if !mask.iter().any(|&v| v) {
            continue;
        }
        let grown = dilate(&mask, dims);
        let cc = connected_components(&grown, dims, Connectivity::TwentySix);

        let mut group_counts = vec![0usize; cc.count()];
        for (idx, &m) in mask.iter().enumerate() {
            if m {
                group_counts[cc.label_at(idx) as usize - 1] += 1;
            }
        }
        let mut drop_group = vec![false; cc.count()];
        let mut dropped_volumes = Vec::new();
        for (group, &count) in group_counts.iter().enumerate() {
            let volume = count as f64 * voxel_mm3;
            if count > 0 && volume < min_mm3 {
                drop_group[group] = true;
                dropped_volumes.push(volume);
            }
        }
        for (idx, &m) in mask.iter().enumerate() {
            if m && drop_group[cc.label_at(idx) as usize - 1] {
                out.data_mut()[idx] = 0;
            }
        }
        if !dropped_volumes.is_empty() {
            removed.insert(label, dropped_volumes);
        }
    }
    (out, removed)
}

/// Exact Euclidean distance (mm) from every voxel to the nearest `true`
/// voxel, honoring anisotropic spacing. Voxels inside the mask get 0; if the
/// mask is empty every distance is infinite.
///
/// Separable lower-envelope-of-parabolas transform run once per axis on the
/// squared distances, so the result is exact up to floating-point rounding.
pub fn distance_transform(mask: &[bool], dims: Dims, spacing: Spacing) -> Vec<f64> {
    assert_eq!(mask.len(), dims.len(), "mask length must match dims");
    let mut sq: Vec<f64> = mask
        .iter()
        .map(|&m| if m { 0.0 } else { f64::INFINITY })
        .collect();

    let coords_x: Vec<f64> = (0..dims.nx).map(|i| i as f64 * spacing.dx).collect();
    let coords_y: Vec<f64> = (0..dims.ny).map(|i| i as f64 * spacing.dy).collect();
    let coords_z: Vec<f64> = (0..dims.nz).map(|i| i as f64 * spacing.dz).collect();

    let mut line = vec![0.0; dims.nx.max(dims.ny).max(dims.nz)];
    let mut out_line = vec![0.0; line.len()];

    // Along x.
    for z in 0..dims.nz {
        for y in 0..dims.ny {
            for x in 0..dims.nx {
                line[x] = sq[dims.index(x, y, z)];
            }
            dt_line(&line[..dims.nx], &coords_x, &mut out_line[..dims.nx]);
            for x in 0..dims.nx {
                sq[dims.index(x, y, z)] = out_line[x];
            }
        }
    }
    // Along y.
    for z in 0..dims.nz {
        for x in 0..dims.nx {
            for y in 0..dims.ny {
                line[y] = sq[dims.index(x, y, z)];
            }
            dt_line(&line[..dims.ny], &coords_y, &mut out_line[..dims.ny]);
            for y in 0..dims.ny {
                sq[dims.index(x, y, z)] = out_line[y];
            }
        }
    }
    // Along z.
    for y in 0..dims.ny {
        for x in 0..dims.nx {
            for z in 0..dims.nz {
                line[z] = sq[dims.index(x, y, z)];
            }
            dt_line(&line[..dims.nz], &coords_z, &mut out_line[..dims.nz]);
            for z in 0..dims.nz {
                sq[dims.index(x, y, z)] = out_line[z];
            }
        }
    }

    sq.iter().map(|&d| d.sqrt()).collect()
}

/// 1D squared-distance transform: out[i] = min_q (pos[i] - pos[q])² + f[q].
/// Infinite entries in `f` contribute no parabola.
fn dt_line(f: &[f64], pos: &[f64], out: &mut [f64]) {
    let n = f.len();
    // Hull of parabola indices and the left edge of each one's active range.
    let mut hull: Vec<usize> = Vec::with_capacity(n);
    let mut edges: Vec<f64> = Vec::with_capacity(n + 1);

    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            match hull.last() {
                None => {
                    edges.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    // x where parabolas p and q have equal value.
                    let s = ((f[q] + pos[q] * pos[q]) - (f[p] + pos[p] * pos[p]))
                        / (2.0 * (pos[q] - pos[p]));
                    if s <= *edges.last().unwrap() {
                        hull.pop();
                        edges.pop();
                    } else {
                        edges.push(s);
                        break;
                    }
                }
            }
        }
        hull.push(q);
    }

    if hull.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    edges.push(f64::INFINITY);

    let mut k = 0;
    for i in 0..n {
        while edges[k + 1] < pos[i] {
            k += 1;
        }
        let p = hull[k];
        let d = pos[i] - pos[p];
        out[i] = d * d + f[p];
    }
}
