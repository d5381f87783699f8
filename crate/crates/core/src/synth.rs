//! Synthetic ground truth: random nuclei label volumes, intensity images
//! for a high-contrast dense regime and a low-contrast sparse regime, and
//! noisy pseudo-predictions derived from exact targets.
//!
//! All randomness comes from ChaCha8 streams seeded from the configured
//! seed, so outputs depend only on inputs and seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::decode::PredictionTriple;
use crate::error::{Error, Result};
use crate::volume::{LabelVolume, Shape, Volume, VoxelSize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Sphere,
    Ellipsoid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub shape: Shape,
    pub voxel_size_um: VoxelSize,
    pub instance_count: usize,
    /// Radius bounds in voxels.
    pub radius_range: [f64; 2],
    pub shape_kind: ShapeKind,
    /// Minimum centre distance in voxels between instances that are not a
    /// touching pair.
    pub min_center_separation: f64,
    pub touching_pair_fraction: f64,
    pub rng_seed: u64,
}

impl SynthConfig {
    /// Small, densely packed, high-contrast nuclei.
    pub fn em_like(seed: u64) -> Self {
        SynthConfig {
            shape: Shape::cube(128),
            voxel_size_um: VoxelSize::NUCMM_Z,
            instance_count: 200,
            radius_range: [4.0, 7.0],
            shape_kind: ShapeKind::Sphere,
            min_center_separation: 0.0,
            touching_pair_fraction: 0.1,
            rng_seed: seed,
        }
    }

    /// Larger, sparser nuclei.
    pub fn uct_like(seed: u64) -> Self {
        SynthConfig {
            shape: Shape::cube(128),
            voxel_size_um: VoxelSize::NUCMM_M,
            instance_count: 40,
            radius_range: [7.0, 11.0],
            shape_kind: ShapeKind::Ellipsoid,
            min_center_separation: 24.0,
            touching_pair_fraction: 0.05,
            rng_seed: seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.radius_range;
        if !(lo >= 2.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "radius_range must satisfy 2 <= min <= max, got {:?}",
                self.radius_range
            )));
        }
        if !(self.min_center_separation >= 0.0) {
            return Err(Error::InvalidParam("min_center_separation must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.touching_pair_fraction) {
            return Err(Error::InvalidParam("touching_pair_fraction must be in [0, 1]".into()));
        }
        if self.shape.0.contains(&0) || !self.voxel_size_um.is_valid() {
            return Err(Error::InvalidParam("bad volume geometry".into()));
        }
        Ok(())
    }
}

/// One placed instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub id: u32,
    pub center: [f64; 3],
    pub semi_axes: [f64; 3],
    /// Id of the instance this one touches, if placed as a pair.
    pub touches: Option<u32>,
}

impl Body {
    fn bounding_radius(&self) -> f64 {
        self.semi_axes.iter().copied().fold(0.0, f64::max)
    }

    /// Extent of the ellipsoid along unit direction `u`.
    fn extent_along(&self, u: [f64; 3]) -> f64 {
        let s: f64 = (0..3).map(|k| (u[k] / self.semi_axes[k]).powi(2)).sum();
        1.0 / s.sqrt()
    }

    fn contains(&self, p: [usize; 3]) -> bool {
        (0..3)
            .map(|k| ((p[k] as f64 - self.center[k]) / self.semi_axes[k]).powi(2))
            .sum::<f64>()
            <= 1.0
    }

    fn fits_in(&self, shape: Shape) -> bool {
        (0..3).all(|k| {
            self.center[k] - self.semi_axes[k] >= 0.0
                && self.center[k] + self.semi_axes[k] <= (shape.0[k] - 1) as f64
        })
    }

    fn bbox(&self, shape: Shape) -> [(usize, usize); 3] {
        [0, 1, 2].map(|k| {
            let lo = (self.center[k] - self.semi_axes[k]).floor().max(0.0) as usize;
            let hi = ((self.center[k] + self.semi_axes[k]).ceil() as usize).min(shape.0[k] - 1);
            (lo, hi)
        })
    }
}

#[derive(Clone, Debug)]
pub struct SynthLabels {
    pub labels: LabelVolume,
    pub bodies: Vec<Body>,
    pub touching_pairs: usize,
}

impl SynthLabels {
    pub fn achieved_count(&self) -> usize {
        self.bodies.len()
    }
}

/// Minimum voxel gap kept between instances that must not touch.
const CLEARANCE: f64 = 2.0;
const ATTEMPTS_PER_INSTANCE: usize = 200;
/// A touching partner must keep this share of its voxels after the first
/// instance claims the overlap.
const MIN_PARTNER_KEEP: f64 = 0.85;

struct Canvas {
    shape: Shape,
    data: Vec<u32>,
}

impl Canvas {
    /// Paints without overwriting; returns (painted, ideal) voxel counts.
    fn paint(&mut self, b: &Body) -> (usize, usize) {
        let [(z0, z1), (y0, y1), (x0, x1)] = b.bbox(self.shape);
        let (mut painted, mut ideal) = (0, 0);
        for z in z0..=z1 {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    if b.contains([z, y, x]) {
                        ideal += 1;
                        let i = self.shape.index(z, y, x);
                        if self.data[i] == 0 {
                            self.data[i] = b.id;
                            painted += 1;
                        }
                    }
                }
            }
        }
        (painted, ideal)
    }

    fn erase(&mut self, b: &Body) {
        let [(z0, z1), (y0, y1), (x0, x1)] = b.bbox(self.shape);
        for z in z0..=z1 {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let i = self.shape.index(z, y, x);
                    if self.data[i] == b.id {
                        self.data[i] = 0;
                    }
                }
            }
        }
    }

    fn face_contact(&self, a: u32, b: &Body) -> bool {
        let [(z0, z1), (y0, y1), (x0, x1)] = b.bbox(self.shape);
        let faces = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]];
        for z in z0..=z1 {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    if self.data[self.shape.index(z, y, x)] != b.id {
                        continue;
                    }
                    for d in faces {
                        if let Some(j) = self.shape.offset([z, y, x], d) {
                            if self.data[j] == a {
                                return true;
                            }
                        }
                    }
                }
            }
        }
        false
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
}

fn random_body(rng: &mut ChaCha8Rng, cfg: &SynthConfig, id: u32) -> Body {
    let [lo, hi] = cfg.radius_range;
    let r = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let semi_axes = match cfg.shape_kind {
        ShapeKind::Sphere => [r; 3],
        ShapeKind::Ellipsoid => [0; 3].map(|_| r * rng.random_range(0.6..=1.0)),
    };
    let center = [0, 1, 2].map(|k| {
        let n = cfg.shape.0[k] as f64;
        rng.random_range(0.0..n).floor()
    });
    Body {
        id,
        center,
        semi_axes,
        touches: None,
    }
}

fn random_direction(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [0; 3].map(|_| StandardNormal.sample(rng));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-9 {
            return v.map(|c| c / n);
        }
    }
}

fn clear_of(b: &Body, placed: &[Body], skip: Option<u32>, min_sep: f64) -> bool {
    placed.iter().filter(|o| Some(o.id) != skip).all(|o| {
        let need = (b.bounding_radius() + o.bounding_radius() + CLEARANCE).max(min_sep);
        dist(b.center, o.center) >= need
    })
}

/// Places solid spheres or ellipsoids by rejection sampling. Touching pairs
/// are placed first: the partner centre sits at the summed extents along a
/// random direction, snapped to the lattice, and the first instance keeps
/// any shared voxels.
pub fn generate_labels(cfg: &SynthConfig) -> Result<SynthLabels> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut canvas = Canvas {
        shape: cfg.shape,
        data: vec![0; cfg.shape.len()],
    };
    let mut placed: Vec<Body> = Vec::new();
    let n_pairs = ((cfg.instance_count as f64 * cfg.touching_pair_fraction) / 2.0).round() as usize;
    let n_pairs = n_pairs.min(cfg.instance_count / 2);
    let n_single = cfg.instance_count - 2 * n_pairs;
    let mut next_id = 1u32;
    let mut touching_pairs = 0;

    let mut attempts = 0;
    while touching_pairs < n_pairs && attempts < ATTEMPTS_PER_INSTANCE * n_pairs.max(1) {
        attempts += 1;
        let mut a = random_body(&mut rng, cfg, next_id);
        let mut b = random_body(&mut rng, cfg, next_id + 1);
        if !a.fits_in(cfg.shape) || !clear_of(&a, &placed, None, cfg.min_center_separation) {
            continue;
        }
        let dir = random_direction(&mut rng);
        let reach = a.extent_along(dir) + b.extent_along(dir.map(|c| -c));
        let mut accepted = false;
        for pull in [0.0, 0.5, 1.0] {
            b.center = [0, 1, 2].map(|k| (a.center[k] + dir[k] * (reach - pull)).round());
            if !b.fits_in(cfg.shape) || !clear_of(&b, &placed, None, cfg.min_center_separation) {
                continue;
            }
            canvas.paint(&a);
            let (painted, ideal) = canvas.paint(&b);
            if (painted as f64) >= MIN_PARTNER_KEEP * ideal as f64 && canvas.face_contact(a.id, &b) {
                accepted = true;
                break;
            }
            canvas.erase(&b);
            canvas.erase(&a);
        }
        if accepted {
            a.touches = Some(b.id);
            b.touches = Some(a.id);
            placed.push(a);
            placed.push(b);
            next_id += 2;
            touching_pairs += 1;
        }
    }

    let mut singles = 0;
    let mut attempts = 0;
    while singles < n_single && attempts < ATTEMPTS_PER_INSTANCE * n_single.max(1) {
        attempts += 1;
        let body = random_body(&mut rng, cfg, next_id);
        if !body.fits_in(cfg.shape) || !clear_of(&body, &placed, None, cfg.min_center_separation) {
            continue;
        }
        canvas.paint(&body);
        placed.push(body);
        next_id += 1;
        singles += 1;
    }

    if placed.is_empty() {
        return Err(Error::Infeasible(format!(
            "no instance with radius {:?} fits in {:?}",
            cfg.radius_range, cfg.shape
        )));
    }
    Ok(SynthLabels {
        labels: LabelVolume::new(cfg.shape, cfg.voxel_size_um, canvas.data)?,
        bodies: placed,
        touching_pairs,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Texture {
    Flat,
    /// Means scale linearly from 0.75x at z = 0 to 1.25x at the last slice.
    Gradient,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntensityModel {
    pub fg_mean: f64,
    pub fg_std: f64,
    pub bg_mean: f64,
    pub bg_std: f64,
    pub texture: Texture,
    #[serde(default)]
    pub target_kl: Option<f64>,
}

impl IntensityModel {
    /// Equal-variance Gaussians whose KL divergence equals `target_kl`:
    /// `(fg_mean - bg_mean)^2 / (2 std^2) = target_kl`.
    pub fn with_target_kl(bg_mean: f64, std: f64, target_kl: f64) -> Self {
        IntensityModel {
            fg_mean: bg_mean + std * (2.0 * target_kl).sqrt(),
            fg_std: std,
            bg_mean,
            bg_std: std,
            texture: Texture::Flat,
            target_kl: Some(target_kl),
        }
    }

    /// High foreground/background separation.
    pub fn em_like() -> Self {
        Self::with_target_kl(80.0, 20.0, 3.43)
    }

    /// Low contrast.
    pub fn uct_like() -> Self {
        Self::with_target_kl(100.0, 25.0, 1.33)
    }

    /// Closed-form KL between the foreground and background Gaussians.
    pub fn gaussian_kl(&self) -> f64 {
        let (m1, s1, m0, s0) = (self.fg_mean, self.fg_std, self.bg_mean, self.bg_std);
        (s0 / s1).ln() + (s1 * s1 + (m1 - m0).powi(2)) / (2.0 * s0 * s0) - 0.5
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fg_std >= 0.0
            && self.bg_std >= 0.0
            && [self.fg_mean, self.fg_std, self.bg_mean, self.bg_std]
                .iter()
                .all(|v| v.is_finite());
        if !ok {
            return Err(Error::InvalidParam("intensity model needs finite means and std >= 0".into()));
        }
        Ok(())
    }
}

/// Draws every voxel from the foreground or background Gaussian, in raster
/// order from a single stream.
pub fn render_image(labels: &LabelVolume, m: &IntensityModel, rng_seed: u64) -> Result<Volume<f32>> {
    m.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let shape = labels.shape();
    let nz = shape.0[0];
    let slab = shape.0[1] * shape.0[2];
    let data = labels
        .data()
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let (mean, std) = if l != 0 {
                (m.fg_mean, m.fg_std)
            } else {
                (m.bg_mean, m.bg_std)
            };
            let scale = match m.texture {
                Texture::Flat => 1.0,
                Texture::Gradient => {
                    let z = i / slab;
                    0.75 + 0.5 * z as f64 / (nz.max(2) - 1) as f64
                }
            };
            let z: f64 = StandardNormal.sample(&mut rng);
            ((mean + std * z) * scale) as f32
        })
        .collect();
    labels.with_data(data)
}

/// Per-channel corruption of an exact (or predicted) triple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    /// Standard deviation for foreground, contour and distance.
    pub gaussian_std: [f64; 3],
    /// Box blur radius in voxels; 0 disables.
    pub blur_radius: usize,
    pub dropout_fraction: f64,
    pub rng_seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            gaussian_std: [0.0; 3],
            blur_radius: 0,
            dropout_fraction: 0.0,
            rng_seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.gaussian_std.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidParam("gaussian_std must be finite and >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.dropout_fraction) {
            return Err(Error::InvalidParam("dropout_fraction must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Adds Gaussian noise, blurs, drops voxels to 0, then clamps each channel
/// to its valid range. Channel `c` uses ChaCha stream `c` of the seed.
pub fn corrupt_predictions(t: &PredictionTriple, n: &NoiseSpec) -> Result<PredictionTriple> {
    n.validate()?;
    t.validate()?;
    let channels = [(&t.foreground, 0.0f32), (&t.contour, 0.0), (&t.distance, -1.0)];
    let mut out = Vec::with_capacity(3);
    for (c, (vol, lo)) in channels.into_iter().enumerate() {
        let mut data: Vec<f64> = vol.data().iter().map(|&v| v as f64).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(n.rng_seed);
        rng.set_stream(c as u64);
        let std = n.gaussian_std[c];
        if std > 0.0 {
            let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidParam(e.to_string()))?;
            for v in data.iter_mut() {
                *v += normal.sample(&mut rng);
            }
        }
        if n.blur_radius > 0 {
            data = box_blur(vol.shape(), data, n.blur_radius);
        }
        if n.dropout_fraction > 0.0 {
            for v in data.iter_mut() {
                if rng.random::<f64>() < n.dropout_fraction {
                    *v = 0.0;
                }
            }
        }
        let clamped = data.into_iter().map(|v| (v as f32).clamp(lo, 1.0)).collect();
        out.push(vol.with_data::<f32>(clamped)?);
    }
    let distance = out.pop().unwrap();
    let contour = out.pop().unwrap();
    let foreground = out.pop().unwrap();
    PredictionTriple::new(foreground, contour, distance)
}

/// Separable mean filter over a (2r+1)^3 box clipped at the volume edge.
fn box_blur(shape: Shape, mut buf: Vec<f64>, radius: usize) -> Vec<f64> {
    let dims = shape.0;
    let strides = [dims[1] * dims[2], dims[2], 1];
    let mut line = Vec::new();
    let mut prefix = Vec::new();
    for axis in 0..3 {
        let n = dims[axis];
        if n == 1 {
            continue;
        }
        let stride = strides[axis];
        for start in 0..shape.len() {
            if shape.coords(start)[axis] != 0 {
                continue;
            }
            line.clear();
            line.extend((0..n).map(|i| buf[start + i * stride]));
            prefix.clear();
            prefix.push(0.0);
            let mut acc = 0.0;
            for &v in &line {
                acc += v;
                prefix.push(acc);
            }
            for i in 0..n {
                let a = i.saturating_sub(radius);
                let b = (i + radius).min(n - 1);
                buf[start + i * stride] = (prefix[b + 1] - prefix[a]) / (b + 1 - a) as f64;
            }
        }
    }
    buf
}
