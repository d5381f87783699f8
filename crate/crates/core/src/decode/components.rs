//! Connected-component labeling of binary masks.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{check_binary, LabelVolume, ProbVolume, Shape};

/// Voxel adjacency: face (6), face+edge (18) or face+edge+corner (26).
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Six,
    Eighteen,
    TwentySix,
}

impl Connectivity {
    /// Neighbour offsets in raster order, excluding the centre.
    pub fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::with_capacity(26);
        for dz in -1isize..=1 {
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let nonzero = [dz, dy, dx].iter().filter(|&&d| d != 0).count();
                    let keep = match self {
                        Connectivity::Six => nonzero == 1,
                        Connectivity::Eighteen => nonzero == 1 || nonzero == 2,
                        Connectivity::TwentySix => nonzero > 0,
                    };
                    if keep {
                        out.push([dz, dy, dx]);
                    }
                }
            }
        }
        out
    }
}

impl TryFrom<u8> for Connectivity {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            6 => Ok(Connectivity::Six),
            18 => Ok(Connectivity::Eighteen),
            26 => Ok(Connectivity::TwentySix),
            other => Err(format!("connectivity must be 6, 18 or 26, got {other}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        }
    }
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", u8::from(*self))
    }
}

/// Neighbour lookup that avoids bounds checks away from the volume faces.
pub(crate) struct Neighbors {
    shape: Shape,
    offsets: Vec<[isize; 3]>,
    linear: Vec<isize>,
}

impl Neighbors {
    pub(crate) fn new(shape: Shape, connectivity: Connectivity) -> Self {
        let offsets = connectivity.offsets();
        let [_, ny, nx] = shape.0;
        let linear = offsets
            .iter()
            .map(|d| (d[0] * ny as isize + d[1]) * nx as isize + d[2])
            .collect();
        Neighbors {
            shape,
            offsets,
            linear,
        }
    }

    #[inline]
    pub(crate) fn for_each(&self, index: usize, mut f: impl FnMut(usize)) {
        let c = self.shape.coords(index);
        let [nz, ny, nx] = self.shape.0;
        let interior = (0..3).all(|a| c[a] >= 1) && c[0] + 1 < nz && c[1] + 1 < ny && c[2] + 1 < nx;
        if interior {
            for &d in &self.linear {
                f((index as isize + d) as usize);
            }
        } else {
            for &d in &self.offsets {
                if let Some(j) = self.shape.offset(c, d) {
                    f(j);
                }
            }
        }
    }
}

/// Labels maximal connected components of a binary mask with ids `1..=K`,
/// numbered in the raster order of each component's first voxel.
pub fn connected_components(mask: &ProbVolume, connectivity: Connectivity) -> Result<LabelVolume> {
    check_binary(mask)?;
    let shape = mask.shape();
    let on: Vec<bool> = mask.data().iter().map(|&v| v == 1.0).collect();
    let mut out = vec![0u32; shape.len()];
    let nbrs = Neighbors::new(shape, connectivity);
    let mut queue = VecDeque::new();
    let mut next = 0u32;

    for start in 0..shape.len() {
        if !on[start] || out[start] != 0 {
            continue;
        }
        next = next
            .checked_add(1)
            .ok_or_else(|| Error::Invariant("more than u32::MAX components".into()))?;
        out[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            nbrs.for_each(i, |j| {
                if on[j] && out[j] == 0 {
                    out[j] = next;
                    queue.push_back(j);
                }
            });
        }
    }
    mask.with_data(out)
}
