//! Marker-controlled watershed by priority flooding.
//!
//! Flooding descends the potential `-distance`: the queue pops the voxel
//! with the highest distance first, and among equal distances the one that
//! was queued first. A voxel takes the label of the voxel that first reaches
//! it and is never relabeled.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::components::{Connectivity, Neighbors};
use crate::error::{Error, Result};
use crate::volume::{check_binary, LabelVolume, ProbVolume, SignedDistVolume};

#[derive(Debug)]
struct Entry {
    height: f32,
    seq: u64,
    index: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // max-heap: higher distance first, then lower sequence number
    fn cmp(&self, other: &Self) -> Ordering {
        self.height
            .partial_cmp(&other.height)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Grows `markers` through `region` over the landscape `-distance`.
///
/// Region voxels not connected to any marker stay 0, as does everything
/// outside the region. A marker voxel outside the region is an error; use
/// [`restrict_markers`] first to drop such voxels instead.
pub fn watershed(
    distance: &SignedDistVolume,
    markers: &LabelVolume,
    region: &ProbVolume,
    connectivity: Connectivity,
) -> Result<LabelVolume> {
    distance.ensure_same_shape(markers)?;
    distance.ensure_same_shape(region)?;
    check_binary(region)?;
    if connectivity == Connectivity::Eighteen {
        return Err(Error::InvalidParam("flood connectivity must be 6 or 26".into()));
    }
    if let Some(&bad) = distance.data().iter().find(|v| v.is_nan()) {
        return Err(Error::OutOfRange {
            value: bad,
            lo: -1.0,
            hi: 1.0,
        });
    }

    let shape = distance.shape();
    let height = distance.data();
    let inside: Vec<bool> = region.data().iter().map(|&v| v == 1.0).collect();
    let mut out = vec![0u32; shape.len()];
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;

    for (index, &id) in markers.data().iter().enumerate() {
        if id == 0 {
            continue;
        }
        if !inside[index] {
            return Err(Error::MarkerOutsideRegion { id, index });
        }
        out[index] = id;
        heap.push(Entry {
            height: height[index],
            seq,
            index,
        });
        seq += 1;
    }

    let nbrs = Neighbors::new(shape, connectivity);
    while let Some(Entry { index, .. }) = heap.pop() {
        let id = out[index];
        nbrs.for_each(index, |j| {
            if inside[j] && out[j] == 0 {
                out[j] = id;
                heap.push(Entry {
                    height: height[j],
                    seq,
                    index: j,
                });
                seq += 1;
            }
        });
    }
    markers.with_data(out)
}

/// Drops marker voxels lying outside `region`. Returns the restricted
/// markers and the number of voxels removed.
pub fn restrict_markers(markers: &LabelVolume, region: &ProbVolume) -> Result<(LabelVolume, usize)> {
    markers.ensure_same_shape(region)?;
    let mut dropped = 0;
    let data = markers
        .data()
        .iter()
        .zip(region.data())
        .map(|(&m, &r)| {
            if m != 0 && r != 1.0 {
                dropped += 1;
                0
            } else {
                m
            }
        })
        .collect();
    Ok((markers.with_data(data)?, dropped))
}
