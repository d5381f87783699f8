//! Exact squared Euclidean distance transform.
//!
//! Separable lower-envelope-of-parabolas transform (Felzenszwalb &
//! Huttenlocher), one pass per axis. Voxels with no feature anywhere in the
//! volume stay at `+inf`.

use rayon::prelude::*;

use crate::error::Result;
use crate::volume::{check_binary, ProbVolume, Shape, Volume, VoxelSize};

/// Squared distance from every voxel to the nearest voxel equal to 1.
///
/// With `use_anisotropy` the distances are in squared micrometers using
/// `voxel_size`, otherwise in squared voxel units.
pub fn squared_edt(
    mask: &ProbVolume,
    voxel_size: VoxelSize,
    use_anisotropy: bool,
) -> Result<Volume<f32>> {
    check_binary(mask)?;
    let spacing = if use_anisotropy {
        voxel_size.0
    } else {
        [1.0; 3]
    };
    let features: Vec<bool> = mask.data().iter().map(|&v| v == 1.0).collect();
    let dist = squared_edt_raw(mask.shape(), &features, spacing);
    mask.with_data(dist.into_iter().map(|d| d as f32).collect())
}

/// `f64` squared distances to the nearest `true` voxel.
pub(crate) fn squared_edt_raw(shape: Shape, features: &[bool], spacing: [f64; 3]) -> Vec<f64> {
    let [nz, ny, nx] = shape.0;
    let mut buf: Vec<f64> = features
        .iter()
        .map(|&f| if f { 0.0 } else { f64::INFINITY })
        .collect();

    // x: contiguous rows
    let wx = spacing[2] * spacing[2];
    buf.par_chunks_mut(nx).for_each_init(
        || Envelope::with_capacity(nx),
        |env, row| {
            let input = row.to_vec();
            env.transform(&input, wx, row);
        },
    );

    // y: independent per z-slab
    let wy = spacing[1] * spacing[1];
    buf.par_chunks_mut(ny * nx).for_each_init(
        || (Envelope::with_capacity(ny), vec![0.0; ny], vec![0.0; ny]),
        |(env, line, out), slab| {
            for x in 0..nx {
                for y in 0..ny {
                    line[y] = slab[y * nx + x];
                }
                env.transform(line, wy, out);
                for y in 0..ny {
                    slab[y * nx + x] = out[y];
                }
            }
        },
    );

    // z: one task per y row, scattered back afterwards
    let wz = spacing[0] * spacing[0];
    if nz > 1 {
        let columns: Vec<Vec<f64>> = (0..ny)
            .into_par_iter()
            .map_init(
                || (Envelope::with_capacity(nz), vec![0.0; nz], vec![0.0; nz]),
                |(env, line, out), y| {
                    let mut res = vec![0.0; nz * nx];
                    for x in 0..nx {
                        for z in 0..nz {
                            line[z] = buf[(z * ny + y) * nx + x];
                        }
                        env.transform(line, wz, out);
                        for z in 0..nz {
                            res[z * nx + x] = out[z];
                        }
                    }
                    res
                },
            )
            .collect();
        for (y, res) in columns.into_iter().enumerate() {
            for z in 0..nz {
                let dst = (z * ny + y) * nx;
                buf[dst..dst + nx].copy_from_slice(&res[z * nx..(z + 1) * nx]);
            }
        }
    }
    buf
}

/// Scratch space for the 1D transform.
struct Envelope {
    sites: Vec<usize>,
    bounds: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Envelope {
            sites: Vec::with_capacity(n),
            bounds: Vec::with_capacity(n + 1),
        }
    }

    /// `out[p] = min_q f[q] + w * (p - q)^2`, skipping infinite `f[q]`.
    fn transform(&mut self, f: &[f64], w: f64, out: &mut [f64]) {
        self.sites.clear();
        self.bounds.clear();
        let n = f.len();

        for q in 0..n {
            if !f[q].is_finite() {
                continue;
            }
            loop {
                let Some(&v) = self.sites.last() else {
                    self.sites.push(q);
                    self.bounds.push(f64::NEG_INFINITY);
                    break;
                };
                let s = intersection(f, w, v, q);
                if s <= *self.bounds.last().unwrap() {
                    self.sites.pop();
                    self.bounds.pop();
                } else {
                    self.sites.push(q);
                    self.bounds.push(s);
                    break;
                }
            }
        }

        if self.sites.is_empty() {
            out.fill(f64::INFINITY);
            return;
        }
        let mut k = 0;
        for (p, slot) in out.iter_mut().enumerate() {
            while k + 1 < self.sites.len() && self.bounds[k + 1] < p as f64 {
                k += 1;
            }
            let q = self.sites[k];
            let d = p as f64 - q as f64;
            *slot = f[q] + w * d * d;
        }
    }
}

/// Abscissa where the parabolas rooted at `v < q` intersect.
#[inline]
fn intersection(f: &[f64], w: f64, v: usize, q: usize) -> f64 {
    let (vf, qf) = (v as f64, q as f64);
    ((f[q] + w * qf * qf) - (f[v] + w * vf * vf)) / (2.0 * w * (qf - vf))
}
