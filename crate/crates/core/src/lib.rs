//! Volumetric nuclei instance segmentation toolkit.
//!
//! Generates foreground / contour / signed-distance targets from label
//! volumes, decodes prediction triples into instances with a seeded
//! watershed, scores segmentations with AP at IoU 0.5 and 0.75, computes
//! dataset statistics, and synthesizes labelled test volumes.

pub mod cli;
pub mod decode;
pub mod edt;
pub mod evaluate;
pub mod error;
pub mod stats;
pub mod synth;
pub mod targets;
pub mod volume;

pub use error::{Error, Result};
