use std::path::PathBuf;

use crate::volume::Shape;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("volume invariant violated: {0}")]
    Invariant(String),

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header {}: {reason}", path.display())]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("unknown element kind {0:?} (expected uint8, uint32 or float32)")]
    UnknownElem(String),

    #[error("element kind mismatch: expected {expected}, found {found}")]
    ElemMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("raw file {} holds {actual} bytes, header implies {expected}", path.display())]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch(Shape, Shape),

    #[error("crop origin {origin:?} + size {size:?} exceeds shape {shape:?}")]
    OutOfBounds {
        origin: [usize; 3],
        size: [usize; 3],
        shape: Shape,
    },

    #[error("input mask is not binary: found value {0}")]
    NonBinary(f32),

    #[error("value {value} outside valid range [{lo}, {hi}]")]
    OutOfRange { value: f32, lo: f32, hi: f32 },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("signed distance undefined: volume has no {0} voxels and clamping is disabled")]
    EmptyDistanceSet(&'static str),

    #[error("marker {id} has a voxel outside the flood region at index {index}")]
    MarkerOutsideRegion { id: u32, index: usize },

    #[error("score missing for predicted instance {0}")]
    MissingScore(u32),

    #[error("need at least two instances, found {0}")]
    TooFewInstances(usize),

    #[error("empty {0} after masking")]
    EmptySelection(&'static str),

    #[error("infeasible geometry: {0}")]
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, Error>;
