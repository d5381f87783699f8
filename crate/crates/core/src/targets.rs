//! Learning targets derived from a label volume: binary foreground,
//! instance contour and scaled signed Euclidean distance.

use serde::{Deserialize, Serialize};

use crate::edt::squared_edt_raw;
use crate::error::{Error, Result};
use crate::volume::{LabelVolume, ProbVolume, Shape, SignedDistVolume, VoxelSize};

/// Scaling of the signed distance target. Foreground distances are divided
/// by `alpha`, background distances by `beta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistanceParams {
    pub alpha: f64,
    pub beta: f64,
    pub clamp: bool,
}

impl Default for DistanceParams {
    fn default() -> Self {
        DistanceParams {
            alpha: 8.0,
            beta: 50.0,
            clamp: true,
        }
    }
}

impl DistanceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParam(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParam(format!("beta must be > 0, got {}", self.beta)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContourParams {
    /// Chebyshev radius in voxels.
    pub thickness: usize,
    pub include_background_boundary: bool,
}

impl Default for ContourParams {
    fn default() -> Self {
        ContourParams {
            thickness: 1,
            include_background_boundary: true,
        }
    }
}

impl ContourParams {
    pub fn validate(&self) -> Result<()> {
        if self.thickness == 0 {
            return Err(Error::InvalidParam("contour thickness must be >= 1".into()));
        }
        Ok(())
    }
}

/// Foreground, contour and distance volumes of identical shape.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetTriple {
    pub foreground: ProbVolume,
    pub contour: ProbVolume,
    pub distance: SignedDistVolume,
}

pub fn foreground_mask(labels: &LabelVolume) -> ProbVolume {
    labels.map(|l| if l != 0 { 1.0 } else { 0.0 })
}

/// Flags foreground voxels lying within `thickness` (Chebyshev) of a voxel
/// with a different label. Background neighbours count only when
/// `include_background_boundary` is set. Voxels beyond the volume edge are
/// not neighbours.
pub fn contour_map(labels: &LabelVolume, p: ContourParams) -> Result<ProbVolume> {
    p.validate()?;
    let shape = labels.shape();
    let data = labels.data();

    // A voxel with label l is flagged iff some neighbour in the box differs
    // from l, i.e. the box min or max differs from l. Background is replaced
    // by the identity of each reduction when it must be ignored.
    let (lo_bg, hi_bg) = if p.include_background_boundary {
        (0, 0)
    } else {
        (u32::MAX, 0)
    };
    let lo_src: Vec<u32> = data.iter().map(|&l| if l == 0 { lo_bg } else { l }).collect();
    let hi_src: Vec<u32> = data.iter().map(|&l| if l == 0 { hi_bg } else { l }).collect();
    let lo = box_filter(shape, lo_src, p.thickness, u32::min, u32::MAX);
    let hi = box_filter(shape, hi_src, p.thickness, u32::max, 0);

    let out = data
        .iter()
        .zip(lo.iter().zip(&hi))
        .map(|(&l, (&mn, &mx))| {
            if l != 0 && ((mn != l && mn != u32::MAX) || (mx != l && mx != 0)) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    labels.with_data(out)
}

/// Separable running min/max over a (2r+1)^3 box clipped at the volume edge.
fn box_filter(
    shape: Shape,
    mut buf: Vec<u32>,
    radius: usize,
    op: fn(u32, u32) -> u32,
    identity: u32,
) -> Vec<u32> {
    let dims = shape.0;
    let strides = [dims[1] * dims[2], dims[2], 1];
    let mut line = Vec::new();
    for axis in 0..3 {
        let n = dims[axis];
        if n == 1 {
            continue;
        }
        line.resize(n, identity);
        let stride = strides[axis];
        for start in 0..shape.len() {
            if shape.coords(start)[axis] != 0 {
                continue;
            }
            for (i, slot) in line.iter_mut().enumerate() {
                *slot = buf[start + i * stride];
            }
            for i in 0..n {
                let a = i.saturating_sub(radius);
                let b = (i + radius).min(n - 1);
                buf[start + i * stride] = line[a..=b].iter().fold(identity, |acc, &v| op(acc, v));
            }
        }
    }
    buf
}

/// Scaled signed Euclidean distance: `+dist(x, background) / alpha` on
/// foreground, `-dist(x, foreground) / beta` on background.
///
/// A volume without foreground (or without background) has no finite
/// distance to the missing set; under `clamp` those voxels saturate at -1
/// (or +1), otherwise it is an error.
pub fn signed_distance(
    labels: &LabelVolume,
    p: DistanceParams,
    voxel_size: VoxelSize,
    use_anisotropy: bool,
) -> Result<SignedDistVolume> {
    p.validate()?;
    if use_anisotropy && !voxel_size.is_valid() {
        return Err(Error::InvalidParam(format!("bad voxel size {:?}", voxel_size.0)));
    }
    let spacing = if use_anisotropy { voxel_size.0 } else { [1.0; 3] };
    let shape = labels.shape();
    let fg: Vec<bool> = labels.data().iter().map(|&l| l != 0).collect();
    let bg: Vec<bool> = fg.iter().map(|&f| !f).collect();

    let has_fg = fg.iter().any(|&f| f);
    let has_bg = bg.iter().any(|&b| b);
    if !p.clamp {
        if !has_fg {
            return Err(Error::EmptyDistanceSet("foreground"));
        }
        if !has_bg {
            return Err(Error::EmptyDistanceSet("background"));
        }
    }

    let to_fg = squared_edt_raw(shape, &fg, spacing);
    let to_bg = squared_edt_raw(shape, &bg, spacing);
    let out = fg
        .iter()
        .zip(to_fg.iter().zip(&to_bg))
        .map(|(&is_fg, (&dfg, &dbg))| {
            let v = if is_fg {
                dbg.sqrt() / p.alpha
            } else {
                -dfg.sqrt() / p.beta
            };
            let v = if p.clamp { v.clamp(-1.0, 1.0) } else { v };
            v as f32
        })
        .collect();
    labels.with_data(out)
}

pub fn make_targets(
    labels: &LabelVolume,
    dp: DistanceParams,
    cp: ContourParams,
    voxel_size: VoxelSize,
    use_anisotropy: bool,
) -> Result<TargetTriple> {
    Ok(TargetTriple {
        foreground: foreground_mask(labels),
        contour: contour_map(labels, cp)?,
        distance: signed_distance(labels, dp, voxel_size, use_anisotropy)?,
    })
}
