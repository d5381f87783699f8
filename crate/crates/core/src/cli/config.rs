//! JSON parameter blocks for each subcommand. Unknown keys are rejected and
//! missing keys take the module defaults.

use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::evaluate::DEFAULT_THRESHOLDS;
use crate::synth::{IntensityModel, NoiseSpec, SynthConfig};
use crate::targets::{ContourParams, DistanceParams};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetsConfig {
    pub distance: DistanceParams,
    pub contour: ContourParams,
    pub use_anisotropy: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub thresholds: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthRunConfig {
    pub synth: SynthConfig,
    pub intensity: IntensityModel,
    /// Seed for image rendering; defaults to the placement seed.
    #[serde(default)]
    pub render_seed: Option<u64>,
    /// When present, a corrupted prediction triple is written as well.
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    EmLike,
    UctLike,
}

impl SynthRunConfig {
    pub fn preset(p: Preset, seed: u64) -> Self {
        let (synth, intensity) = match p {
            Preset::EmLike => (SynthConfig::em_like(seed), IntensityModel::em_like()),
            Preset::UctLike => (SynthConfig::uct_like(seed), IntensityModel::uct_like()),
        };
        SynthRunConfig {
            synth,
            intensity,
            render_seed: None,
            noise: None,
        }
    }
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("bad config {}", path.display()))
}

/// Loads `path` when given, otherwise the defaults.
pub fn load_or_default<T: DeserializeOwned + Default>(path: Option<&Path>) -> anyhow::Result<T> {
    match path {
        Some(p) => load_json(p),
        None => Ok(T::default()),
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
