//! Brute-force oracles and random volume builders shared by the test targets.
#![allow(dead_code)]

use nucseg::volume::{LabelVolume, ProbVolume, Shape, Volume, VoxelSize};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn mask_from(shape: Shape, bits: &[bool]) -> ProbVolume {
    let data = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    ProbVolume::new(shape, VoxelSize::UNIT, data).unwrap()
}

pub fn random_shape(r: &mut impl Rng, max: usize) -> Shape {
    Shape::new(r.random_range(1..=max), r.random_range(1..=max), r.random_range(1..=max))
}

pub fn random_bits(r: &mut impl Rng, n: usize, density: f64) -> Vec<bool> {
    (0..n).map(|_| r.random_bool(density)).collect()
}

/// Minimum squared distance from each voxel to any `true` voxel by checking
/// every pair; `u64::MAX` when there is none.
pub fn brute_squared_edt(shape: Shape, features: &[bool], spacing: [f64; 3]) -> Vec<f64> {
    let pts: Vec<[usize; 3]> = (0..shape.len()).filter(|&i| features[i]).map(|i| shape.coords(i)).collect();
    (0..shape.len())
        .map(|i| {
            let c = shape.coords(i);
            pts.iter()
                .map(|p| {
                    (0..3)
                        .map(|a| {
                            let d = (p[a] as f64 - c[a] as f64) * spacing[a];
                            d * d
                        })
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

pub fn raster_offsets(full: bool) -> Vec<[isize; 3]> {
    let mut out = Vec::new();
    for dz in -1isize..=1 {
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                let n = (dz != 0) as u8 + (dy != 0) as u8 + (dx != 0) as u8;
                if (full && n > 0) || n == 1 {
                    out.push([dz, dy, dx]);
                }
            }
        }
    }
    out
}

/// Priority flood with a linear scan for the next voxel: highest distance
/// first, earliest queued among equals. Voxels are labeled when queued;
/// neighbours are visited in raster order.
pub fn oracle_flood(
    shape: Shape,
    distance: &[f32],
    markers: &[u32],
    region: &[bool],
    full: bool,
) -> Vec<u32> {
    let offsets = raster_offsets(full);
    let mut out = vec![0u32; shape.len()];
    let mut queue: Vec<(f32, u64, usize)> = Vec::new();
    let mut seq = 0;
    for i in 0..shape.len() {
        if markers[i] != 0 {
            out[i] = markers[i];
            queue.push((distance[i], seq, i));
            seq += 1;
        }
    }
    while !queue.is_empty() {
        let mut best = 0;
        for k in 1..queue.len() {
            let (h, s, _) = queue[k];
            let (bh, bs, _) = queue[best];
            if h > bh || (h == bh && s < bs) {
                best = k;
            }
        }
        let (_, _, i) = queue.swap_remove(best);
        let [z, y, x] = shape.coords(i);
        for o in &offsets {
            let (nz, ny, nx) = (z as isize + o[0], y as isize + o[1], x as isize + o[2]);
            let [sz, sy, sx] = shape.0;
            if nz < 0 || ny < 0 || nx < 0 || nz >= sz as isize || ny >= sy as isize || nx >= sx as isize {
                continue;
            }
            let j = shape.index(nz as usize, ny as usize, nx as usize);
            if region[j] && out[j] == 0 {
                out[j] = out[i];
                queue.push((distance[j], seq, j));
                seq += 1;
            }
        }
    }
    out
}

/// Labels with axis-aligned boxes painted in order (later boxes overwrite).
pub fn random_box_labels(r: &mut impl Rng, shape: Shape, boxes: usize) -> LabelVolume {
    let mut data = vec![0u32; shape.len()];
    for id in 1..=boxes as u32 {
        let mut lo = [0; 3];
        let mut hi = [0; 3];
        for a in 0..3 {
            let n = shape.0[a];
            let s = r.random_range(0..n);
            let e = r.random_range(s..n);
            lo[a] = s;
            hi[a] = e;
        }
        for z in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for x in lo[2]..=hi[2] {
                    data[shape.index(z, y, x)] = id;
                }
            }
        }
    }
    LabelVolume::new(shape, VoxelSize::UNIT, data).unwrap()
}

/// Solid ball of `id` with voxels at Euclidean distance <= radius from `c`.
pub fn paint_ball(v: &mut [u32], shape: Shape, c: [f64; 3], radius: f64, id: u32) {
    for i in 0..shape.len() {
        let p = shape.coords(i);
        let d2: f64 = (0..3).map(|a| (p[a] as f64 - c[a]).powi(2)).sum();
        if d2 <= radius * radius {
            v[i] = id;
        }
    }
}

/// Renumbers nonzero ids through a permutation of 1..=max.
pub fn permute_ids(labels: &LabelVolume, r: &mut impl Rng) -> LabelVolume {
    let max = labels.data().iter().copied().max().unwrap_or(0) as usize;
    let mut perm: Vec<u32> = (1..=max as u32).collect();
    for i in (1..perm.len()).rev() {
        let j = r.random_range(0..=i);
        perm.swap(i, j);
    }
    labels.map(|l| if l == 0 { 0 } else { perm[l as usize - 1] + 1000 })
}

pub fn volume<T: nucseg::volume::Element>(shape: Shape, data: Vec<T>) -> Volume<T> {
    Volume::new(shape, VoxelSize::UNIT, data).unwrap()
}
