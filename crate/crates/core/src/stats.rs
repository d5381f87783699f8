//! Dataset statistics: instance sizes, nearest-neighbour centre distances
//! and the foreground/background intensity KL divergence.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{AnyVolume, LabelVolume, RoiMask, VoxelSize};

/// Additive smoothing applied to both intensity distributions.
pub const KL_EPSILON: f64 = 1e-9;
pub const DEFAULT_KL_BINS: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bins {
    /// `n` equal-width bins spanning the data.
    Count(usize),
    Range { count: usize, lo: f64, hi: f64 },
    Edges(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub normalized: bool,
    /// `counts / total` when normalized.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density: Option<Vec<f64>>,
}

impl Histogram {
    /// Values below the first edge land in the first bin, values at or above
    /// the last edge in the last bin, so every value is counted.
    pub fn build(values: &[f64], bins: &Bins, normalized: bool) -> Result<Histogram> {
        let bin_edges = edges_for(values, bins)?;
        let n_bins = bin_edges.len() - 1;
        let mut counts = vec![0u64; n_bins];
        for &v in values {
            counts[bin_index(&bin_edges, v)] += 1;
        }
        let density = normalized.then(|| {
            let total = values.len().max(1) as f64;
            counts.iter().map(|&c| c as f64 / total).collect()
        });
        Ok(Histogram {
            bin_edges,
            counts,
            normalized,
            density,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Index of the most populated bin (first on ties).
    pub fn mode_bin(&self) -> Option<usize> {
        let max = *self.counts.iter().max()?;
        (max > 0).then(|| self.counts.iter().position(|&c| c == max).unwrap())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count,density\n");
        for i in 0..self.counts.len() {
            let density = self
                .density
                .as_ref()
                .map_or(String::new(), |d| d[i].to_string());
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.bin_edges[i],
                self.bin_edges[i + 1],
                self.counts[i],
                density
            ));
        }
        out
    }
}

fn edges_for(values: &[f64], bins: &Bins) -> Result<Vec<f64>> {
    let uniform = |count: usize, lo: f64, hi: f64| -> Result<Vec<f64>> {
        if count == 0 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParam(format!(
                "bad histogram range: {count} bins over [{lo}, {hi}]"
            )));
        }
        let w = (hi - lo) / count as f64;
        Ok((0..=count)
            .map(|i| if i == count { hi } else { lo + w * i as f64 })
            .collect())
    };
    match bins {
        Bins::Count(n) => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if values.is_empty() {
                uniform(*n, 0.0, 1.0)
            } else if hi > lo {
                uniform(*n, lo, hi)
            } else {
                uniform(*n, lo - 0.5, hi + 0.5)
            }
        }
        Bins::Range { count, lo, hi } => uniform(*count, *lo, *hi),
        Bins::Edges(e) => {
            if e.len() < 2 || e.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::InvalidParam(
                    "bin edges must be strictly ascending with at least two entries".into(),
                ));
            }
            Ok(e.clone())
        }
    }
}

fn bin_index(edges: &[f64], v: f64) -> usize {
    let n_bins = edges.len() - 1;
    // first edge strictly greater than v, minus one
    let upper = edges.partition_point(|&e| e <= v);
    upper.saturating_sub(1).min(n_bins - 1)
}

/// Voxel count per instance, keyed by id.
pub fn instance_voxel_counts(labels: &LabelVolume) -> BTreeMap<u32, u64> {
    let mut out = BTreeMap::new();
    for &l in labels.data() {
        if l != 0 {
            *out.entry(l).or_insert(0) += 1;
        }
    }
    out
}

pub fn size_distribution(labels: &LabelVolume, bins: &Bins, normalized: bool) -> Result<Histogram> {
    let sizes: Vec<f64> = instance_voxel_counts(labels).values().map(|&n| n as f64).collect();
    Histogram::build(&sizes, bins, normalized)
}

/// Unweighted voxel centroid of every instance in micrometers.
pub fn centroids(labels: &LabelVolume, voxel_size: VoxelSize) -> BTreeMap<u32, [f64; 3]> {
    let shape = labels.shape();
    let mut acc: BTreeMap<u32, ([f64; 3], u64)> = BTreeMap::new();
    for (i, &l) in labels.data().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let c = shape.coords(i);
        let e = acc.entry(l).or_insert(([0.0; 3], 0));
        for a in 0..3 {
            e.0[a] += c[a] as f64;
        }
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(id, (sum, n))| {
            let c = [0, 1, 2].map(|a| sum[a] / n as f64 * voxel_size.0[a]);
            (id, c)
        })
        .collect()
}

/// Distance from each point to its nearest other point, by a sweep over
/// points sorted on the first coordinate.
pub fn nearest_neighbor_distances(points: &[[f64; 3]]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a][0].total_cmp(&points[b][0]).then(a.cmp(&b)));
    let dist2 = |a: &[f64; 3], b: &[f64; 3]| (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>();

    let mut out = vec![f64::INFINITY; points.len()];
    for (rank, &i) in order.iter().enumerate() {
        let p = &points[i];
        let mut best = f64::INFINITY;
        for &j in order[rank + 1..].iter() {
            let dz = points[j][0] - p[0];
            if dz * dz >= best {
                break;
            }
            best = best.min(dist2(p, &points[j]));
        }
        for &j in order[..rank].iter().rev() {
            let dz = p[0] - points[j][0];
            if dz * dz >= best {
                break;
            }
            best = best.min(dist2(p, &points[j]));
        }
        out[i] = best.sqrt();
    }
    out
}

/// Nearest-neighbour centroid distances (µm) per instance, in id order.
pub fn nn_distances(labels: &LabelVolume, voxel_size: VoxelSize) -> Result<Vec<f64>> {
    let c: Vec<[f64; 3]> = centroids(labels, voxel_size).into_values().collect();
    if c.len() < 2 {
        return Err(Error::TooFewInstances(c.len()));
    }
    Ok(nearest_neighbor_distances(&c))
}

pub fn nn_center_distance(
    labels: &LabelVolume,
    voxel_size: VoxelSize,
    bins: &Bins,
    normalized: bool,
) -> Result<Histogram> {
    Histogram::build(&nn_distances(labels, voxel_size)?, bins, normalized)
}

/// `D_KL(p || q)` between two count vectors after adding `eps` to each
/// normalized bin and renormalizing.
pub fn kl_divergence(p_counts: &[u64], q_counts: &[u64], eps: f64) -> f64 {
    let smooth = |c: &[u64]| -> Vec<f64> {
        let total = c.iter().sum::<u64>().max(1) as f64;
        let raw: Vec<f64> = c.iter().map(|&n| n as f64 / total + eps).collect();
        let z: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / z).collect()
    };
    let p = smooth(p_counts);
    let q = smooth(q_counts);
    p.iter()
        .zip(&q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum::<f64>()
        .max(0.0)
}

/// KL divergence of the foreground intensity histogram from the background
/// one, over shared bins. 8-bit images bin over [0, 256); other kinds over
/// the observed range of the selected voxels.
pub fn intensity_kl(
    image: &AnyVolume,
    labels: &LabelVolume,
    roi: Option<&RoiMask>,
    bins: usize,
) -> Result<f64> {
    if image.shape() != labels.shape() {
        return Err(Error::ShapeMismatch(image.shape(), labels.shape()));
    }
    if let Some(roi) = roi {
        labels.ensure_same_shape(roi)?;
    }
    let values = image.intensities();
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    for (i, (&v, &l)) in values.iter().zip(labels.data()).enumerate() {
        if roi.is_some_and(|r| r.data()[i] == 0) {
            continue;
        }
        if l != 0 {
            fg.push(v);
        } else {
            bg.push(v);
        }
    }
    if fg.is_empty() {
        return Err(Error::EmptySelection("foreground"));
    }
    if bg.is_empty() {
        return Err(Error::EmptySelection("background"));
    }

    let spec = match image {
        AnyVolume::U8(_) => Bins::Range {
            count: bins,
            lo: 0.0,
            hi: 256.0,
        },
        _ => {
            let lo = fg.iter().chain(&bg).copied().fold(f64::INFINITY, f64::min);
            let hi = fg.iter().chain(&bg).copied().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                Bins::Range { count: bins, lo, hi }
            } else {
                Bins::Range {
                    count: bins,
                    lo: lo - 0.5,
                    hi: lo + 0.5,
                }
            }
        }
    };
    let hf = Histogram::build(&fg, &spec, false)?;
    let hb = Histogram::build(&bg, &spec, false)?;
    Ok(kl_divergence(&hf.counts, &hb.counts, KL_EPSILON))
}
