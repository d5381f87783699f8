//! Instance decoding: seeds from all three predicted channels, connected
//! seed components as markers, then a marker-controlled watershed over the
//! predicted signed distance restricted to the foreground region.

mod components;
mod watershed;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use components::{connected_components, Connectivity};
pub use watershed::{restrict_markers, watershed};

use crate::error::{Error, Result};
use crate::targets::TargetTriple;
use crate::volume::{check_prob, check_signed, LabelVolume, ProbVolume, SignedDistVolume};

/// Seeding and region thresholds. All comparisons are strict.
///
/// Seeds need `foreground > tau1`, `contour < tau2` and `distance > tau3`;
/// the flood region needs `foreground > tau4` and `distance > tau5`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeParams {
    pub tau1: f32,
    pub tau2: f32,
    pub tau3: f32,
    pub tau4: f32,
    pub tau5: f32,
    pub seed_connectivity: Connectivity,
    pub flood_connectivity: Connectivity,
    pub min_instance_size: usize,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            tau1: 0.8,
            tau2: 0.1,
            tau3: 0.3,
            tau4: 0.2,
            tau5: 0.0,
            seed_connectivity: Connectivity::TwentySix,
            flood_connectivity: Connectivity::Six,
            min_instance_size: 27,
        }
    }
}

impl DecodeParams {
    pub fn validate(&self) -> Result<()> {
        let unit = [("tau1", self.tau1), ("tau2", self.tau2), ("tau4", self.tau4)];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParam(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        for (name, v) in [("tau3", self.tau3), ("tau5", self.tau5)] {
            if !(-1.0..=1.0).contains(&v) {
                return Err(Error::InvalidParam(format!("{name} must be in [-1, 1], got {v}")));
            }
        }
        if self.flood_connectivity == Connectivity::Eighteen {
            return Err(Error::InvalidParam("flood_connectivity must be 6 or 26".into()));
        }
        Ok(())
    }
}

/// Model outputs: foreground and contour probabilities plus signed distance.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionTriple {
    pub foreground: ProbVolume,
    pub contour: ProbVolume,
    pub distance: SignedDistVolume,
}

impl PredictionTriple {
    pub fn new(foreground: ProbVolume, contour: ProbVolume, distance: SignedDistVolume) -> Result<Self> {
        let t = PredictionTriple {
            foreground,
            contour,
            distance,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        self.foreground.ensure_same_shape(&self.contour)?;
        self.foreground.ensure_same_shape(&self.distance)?;
        check_prob(&self.foreground)?;
        check_prob(&self.contour)?;
        check_signed(&self.distance)
    }
}

impl From<TargetTriple> for PredictionTriple {
    fn from(t: TargetTriple) -> Self {
        PredictionTriple {
            foreground: t.foreground,
            contour: t.contour,
            distance: t.distance,
        }
    }
}

fn threshold_map(pred: &PredictionTriple, keep: impl Fn(f32, f32, f32) -> bool) -> Result<ProbVolume> {
    pred.validate()?;
    let data = pred
        .foreground
        .data()
        .iter()
        .zip(pred.contour.data())
        .zip(pred.distance.data())
        .map(|((&fg, &ct), &dt)| if keep(fg, ct, dt) { 1.0 } else { 0.0 })
        .collect();
    pred.foreground.with_data(data)
}

pub fn seed_mask(pred: &PredictionTriple, p: &DecodeParams) -> Result<ProbVolume> {
    threshold_map(pred, |fg, ct, dt| fg > p.tau1 && ct < p.tau2 && dt > p.tau3)
}

pub fn foreground_region(pred: &PredictionTriple, p: &DecodeParams) -> Result<ProbVolume> {
    threshold_map(pred, |fg, _, dt| fg > p.tau4 && dt > p.tau5)
}

/// Voxel count per nonzero id.
pub fn instance_sizes(labels: &LabelVolume) -> HashMap<u32, usize> {
    let mut sizes = HashMap::new();
    for &l in labels.data() {
        if l != 0 {
            *sizes.entry(l).or_insert(0) += 1;
        }
    }
    sizes
}

/// Sets instances smaller than `min_size` voxels to background.
pub fn filter_small(labels: &LabelVolume, min_size: usize) -> LabelVolume {
    if min_size == 0 {
        return labels.clone();
    }
    let sizes = instance_sizes(labels);
    labels.map(|l| if l != 0 && sizes[&l] < min_size { 0 } else { l })
}

/// Decoded labels plus bookkeeping for the run report.
#[derive(Clone, Debug)]
pub struct Decoded {
    pub labels: LabelVolume,
    pub seed_voxels: usize,
    pub marker_count: usize,
    pub dropped_marker_voxels: usize,
    pub instance_count: usize,
}

pub fn decode(pred: &PredictionTriple, p: &DecodeParams) -> Result<Decoded> {
    p.validate()?;
    let seeds = seed_mask(pred, p)?;
    let seed_voxels = seeds.data().iter().filter(|&&v| v == 1.0).count();
    let markers = connected_components(&seeds, p.seed_connectivity)?;
    let marker_count = markers.data().iter().copied().max().unwrap_or(0) as usize;
    let region = foreground_region(pred, p)?;
    let (markers, dropped_marker_voxels) = restrict_markers(&markers, &region)?;
    let flooded = watershed(&pred.distance, &markers, &region, p.flood_connectivity)?;
    let labels = filter_small(&flooded, p.min_instance_size);
    let instance_count = instance_sizes(&labels).len();
    Ok(Decoded {
        labels,
        seed_voxels,
        marker_count,
        dropped_marker_voxels,
        instance_count,
    })
}
