//! Dense 3D volumes and the canonical on-disk format.
//!
//! Every volume is stored in C order with z as the slowest axis. On disk a
//! volume is a pair of files: a small JSON header and a raw little-endian
//! array holding exactly `z * y * x` elements.
//!
//! ```json
//! {
//!   "shape": [z, y, x],
//!   "elem": "uint8" | "uint32" | "float32",
//!   "voxel_size_um": [z, y, x],
//!   "data_file": "name.raw",
//!   "order": "C",
//!   "endianness": "little"
//! }
//! ```

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Voxel counts along (z, y, x).
#[derive(Copy, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape(pub [usize; 3]);

impl Shape {
    pub const fn new(z: usize, y: usize, x: usize) -> Self {
        Shape([z, y, x])
    }

    pub fn cube(n: usize) -> Self {
        Shape([n, n, n])
    }

    pub fn len(&self) -> usize {
        self.0[0] * self.0[1] * self.0[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.0[1] + y) * self.0[2] + x
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.0[2];
        let rest = index / self.0[2];
        [rest / self.0[1], rest % self.0[1], x]
    }

    /// Linear index of `(z, y, x) + delta`, or `None` when it leaves the grid.
    #[inline]
    pub fn offset(&self, coords: [usize; 3], delta: [isize; 3]) -> Option<usize> {
        let mut out = [0usize; 3];
        for axis in 0..3 {
            let c = coords[axis] as isize + delta[axis];
            if c < 0 || c >= self.0[axis] as isize {
                return None;
            }
            out[axis] = c as usize;
        }
        Some(self.index(out[0], out[1], out[2]))
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}]", self.0[0], self.0[1], self.0[2])
    }
}

/// Physical voxel size along (z, y, x) in micrometers.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoxelSize(pub [f64; 3]);

impl VoxelSize {
    pub const UNIT: VoxelSize = VoxelSize([1.0, 1.0, 1.0]);
    /// Zebrafish SEM volume after downsampling.
    pub const NUCMM_Z: VoxelSize = VoxelSize([0.48, 0.51, 0.51]);
    /// Mouse micro-CT volume.
    pub const NUCMM_M: VoxelSize = VoxelSize([0.72, 0.72, 0.72]);

    pub fn isotropic(s: f64) -> Self {
        VoxelSize([s, s, s])
    }

    pub fn is_valid(&self) -> bool {
        self.0.iter().all(|s| s.is_finite() && *s > 0.0)
    }
}

impl Default for VoxelSize {
    fn default() -> Self {
        VoxelSize::UNIT
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ElemKind {
    U8,
    U32,
    F32,
}

impl ElemKind {
    pub fn name(self) -> &'static str {
        match self {
            ElemKind::U8 => "uint8",
            ElemKind::U32 => "uint32",
            ElemKind::F32 => "float32",
        }
    }

    pub fn size(self) -> usize {
        match self {
            ElemKind::U8 => 1,
            ElemKind::U32 | ElemKind::F32 => 4,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uint8" => Ok(ElemKind::U8),
            "uint32" => Ok(ElemKind::U32),
            "float32" => Ok(ElemKind::F32),
            other => Err(Error::UnknownElem(other.to_string())),
        }
    }
}

/// Scalar types a [`Volume`] may hold.
pub trait Element: Copy + PartialEq + Default + Send + Sync + fmt::Debug + 'static {
    const KIND: ElemKind;

    fn extend_le(self, out: &mut Vec<u8>);
    fn from_le(bytes: &[u8]) -> Self;
    fn to_f64(self) -> f64;
    fn wrap_any(v: Volume<Self>) -> AnyVolume;
    fn unwrap_any(v: AnyVolume) -> Option<Volume<Self>>;
}

macro_rules! any_conversions {
    ($variant:ident) => {
        fn wrap_any(v: Volume<Self>) -> AnyVolume {
            AnyVolume::$variant(v)
        }
        fn unwrap_any(v: AnyVolume) -> Option<Volume<Self>> {
            match v {
                AnyVolume::$variant(v) => Some(v),
                _ => None,
            }
        }
    };
}

impl Element for u8 {
    const KIND: ElemKind = ElemKind::U8;

    fn extend_le(self, out: &mut Vec<u8>) {
        out.push(self);
    }
    fn from_le(bytes: &[u8]) -> Self {
        bytes[0]
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    any_conversions!(U8);
}

impl Element for u32 {
    const KIND: ElemKind = ElemKind::U32;

    fn extend_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn from_le(bytes: &[u8]) -> Self {
        u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    any_conversions!(U32);
}

impl Element for f32 {
    const KIND: ElemKind = ElemKind::F32;

    fn extend_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn from_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    any_conversions!(F32);
}

/// A dense 3D array with physical voxel size. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume<T> {
    shape: Shape,
    voxel_size: VoxelSize,
    data: Vec<T>,
}

/// Instance labels: 0 is background, any other value is an instance id.
pub type LabelVolume = Volume<u32>;
/// Probabilities in [0, 1]; also used for binary masks.
pub type ProbVolume = Volume<f32>;
/// Scaled signed distances in [-1, 1].
pub type SignedDistVolume = Volume<f32>;
/// 1 marks the valid region, 0 is ignored.
pub type RoiMask = Volume<u8>;

impl<T: Element> Volume<T> {
    pub fn new(shape: Shape, voxel_size: VoxelSize, data: Vec<T>) -> Result<Self> {
        if shape.0.contains(&0) {
            return Err(Error::Invariant(format!(
                "shape components must be >= 1, got {shape:?}"
            )));
        }
        if !voxel_size.is_valid() {
            return Err(Error::Invariant(format!(
                "voxel size must be strictly positive, got {:?}",
                voxel_size.0
            )));
        }
        if data.len() != shape.len() {
            return Err(Error::Invariant(format!(
                "data length {} does not match shape {shape:?} ({} voxels)",
                data.len(),
                shape.len()
            )));
        }
        Ok(Volume {
            shape,
            voxel_size,
            data,
        })
    }

    pub fn filled(shape: Shape, voxel_size: VoxelSize, value: T) -> Result<Self> {
        Self::new(shape, voxel_size, vec![value; shape.len()])
    }

    pub fn from_fn(
        shape: Shape,
        voxel_size: VoxelSize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(shape.len());
        for z in 0..shape.0[0] {
            for y in 0..shape.0[1] {
                for x in 0..shape.0[2] {
                    data.push(f(z, y, x));
                }
            }
        }
        Self::new(shape, voxel_size, data)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn voxel_size(&self) -> VoxelSize {
        self.voxel_size
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, z: usize, y: usize, x: usize) -> T {
        self.data[self.shape.index(z, y, x)]
    }

    /// Same geometry, new contents.
    pub fn with_data<U: Element>(&self, data: Vec<U>) -> Result<Volume<U>> {
        Volume::new(self.shape, self.voxel_size, data)
    }

    pub fn map<U: Element>(&self, f: impl Fn(T) -> U) -> Volume<U> {
        Volume {
            shape: self.shape,
            voxel_size: self.voxel_size,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn ensure_same_shape<U>(&self, other: &Volume<U>) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(self.shape, other.shape));
        }
        Ok(())
    }

    /// Re-checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        if self.shape.0.contains(&0) || !self.voxel_size.is_valid() {
            return Err(Error::Invariant(format!(
                "bad geometry: shape {:?}, voxel size {:?}",
                self.shape, self.voxel_size.0
            )));
        }
        if self.data.len() != self.shape.len() {
            return Err(Error::Invariant(format!(
                "data length {} does not match shape {:?}",
                self.data.len(),
                self.shape
            )));
        }
        Ok(())
    }

    /// Sub-volume starting at `origin` with extent `size`.
    pub fn crop(&self, origin: [usize; 3], size: [usize; 3]) -> Result<Self> {
        let in_bounds =
            (0..3).all(|a| size[a] >= 1 && origin[a] + size[a] <= self.shape.0[a]);
        if !in_bounds {
            return Err(Error::OutOfBounds {
                origin,
                size,
                shape: self.shape,
            });
        }
        let mut data = Vec::with_capacity(size[0] * size[1] * size[2]);
        for z in origin[0]..origin[0] + size[0] {
            for y in origin[1]..origin[1] + size[1] {
                let start = self.shape.index(z, y, origin[2]);
                data.extend_from_slice(&self.data[start..start + size[2]]);
            }
        }
        Volume::new(Shape(size), self.voxel_size, data)
    }
}

pub fn crop<T: Element>(v: &Volume<T>, origin: [usize; 3], size: [usize; 3]) -> Result<Volume<T>> {
    v.crop(origin, size)
}

/// Zeroes every label outside the region of interest.
pub fn apply_roi(labels: &LabelVolume, roi: &RoiMask) -> Result<LabelVolume> {
    labels.ensure_same_shape(roi)?;
    let data = labels
        .data()
        .iter()
        .zip(roi.data())
        .map(|(&l, &m)| if m == 0 { 0 } else { l })
        .collect();
    labels.with_data(data)
}

pub fn check_roi(roi: &RoiMask) -> Result<()> {
    match roi.data().iter().find(|&&v| v > 1) {
        Some(&v) => Err(Error::NonBinary(v as f32)),
        None => Ok(()),
    }
}

/// Every voxel in [0, 1].
pub fn check_prob(v: &ProbVolume) -> Result<()> {
    check_range(v, 0.0, 1.0)
}

/// Every voxel in [-1, 1].
pub fn check_signed(v: &SignedDistVolume) -> Result<()> {
    check_range(v, -1.0, 1.0)
}

fn check_range(v: &Volume<f32>, lo: f32, hi: f32) -> Result<()> {
    match v.data().iter().find(|&&x| !(lo..=hi).contains(&x)) {
        Some(&value) => Err(Error::OutOfRange { value, lo, hi }),
        None => Ok(()),
    }
}

/// Every voxel exactly 0 or 1.
pub fn check_binary(v: &ProbVolume) -> Result<()> {
    match v.data().iter().find(|&&x| x != 0.0 && x != 1.0) {
        Some(&value) => Err(Error::NonBinary(value)),
        None => Ok(()),
    }
}

/// A volume of any supported element kind, as read from disk.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyVolume {
    U8(Volume<u8>),
    U32(Volume<u32>),
    F32(Volume<f32>),
}

impl AnyVolume {
    pub fn kind(&self) -> ElemKind {
        match self {
            AnyVolume::U8(_) => ElemKind::U8,
            AnyVolume::U32(_) => ElemKind::U32,
            AnyVolume::F32(_) => ElemKind::F32,
        }
    }

    pub fn shape(&self) -> Shape {
        match self {
            AnyVolume::U8(v) => v.shape(),
            AnyVolume::U32(v) => v.shape(),
            AnyVolume::F32(v) => v.shape(),
        }
    }

    pub fn voxel_size(&self) -> VoxelSize {
        match self {
            AnyVolume::U8(v) => v.voxel_size(),
            AnyVolume::U32(v) => v.voxel_size(),
            AnyVolume::F32(v) => v.voxel_size(),
        }
    }

    /// Voxel values widened to `f64`, in storage order.
    pub fn intensities(&self) -> Vec<f64> {
        match self {
            AnyVolume::U8(v) => v.data().iter().map(|&x| x.to_f64()).collect(),
            AnyVolume::U32(v) => v.data().iter().map(|&x| x.to_f64()).collect(),
            AnyVolume::F32(v) => v.data().iter().map(|&x| x.to_f64()).collect(),
        }
    }

    pub fn into_typed<T: Element>(self) -> Result<Volume<T>> {
        let found = self.kind();
        T::unwrap_any(self).ok_or(Error::ElemMismatch {
            expected: T::KIND.name(),
            found: found.name(),
        })
    }
}

impl<T: Element> From<Volume<T>> for AnyVolume {
    fn from(v: Volume<T>) -> Self {
        T::wrap_any(v)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    shape: [usize; 3],
    elem: String,
    voxel_size_um: [f64; 3],
    data_file: String,
    order: String,
    endianness: String,
}

/// Raw file sitting next to a header: `a/b.json` pairs with `a/b.raw`.
pub fn raw_path_for(header: &Path) -> PathBuf {
    if header.extension().is_some_and(|e| e == "json") {
        header.with_extension("raw")
    } else {
        let mut s = header.as_os_str().to_owned();
        s.push(".raw");
        PathBuf::from(s)
    }
}

fn io_err(path: &Path, source: io::Error) -> Error {
    if source.kind() == io::ErrorKind::NotFound {
        Error::MissingFile(path.to_path_buf())
    } else {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<AnyVolume> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let malformed = |reason: String| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason,
    };
    let header: Header = serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
    if header.order != "C" {
        return Err(malformed(format!("order must be \"C\", got {:?}", header.order)));
    }
    if header.endianness != "little" {
        return Err(malformed(format!(
            "endianness must be \"little\", got {:?}",
            header.endianness
        )));
    }
    let kind = ElemKind::parse(&header.elem)?;
    let shape = Shape(header.shape);
    let voxel_size = VoxelSize(header.voxel_size_um);

    let raw_path = path
        .parent()
        .unwrap_or_else(|| Path::new(""))
        .join(&header.data_file);
    let bytes = fs::read(&raw_path).map_err(|e| io_err(&raw_path, e))?;
    let expected = shape.len() as u64 * kind.size() as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            path: raw_path,
            expected,
            actual: bytes.len() as u64,
        });
    }
    Ok(match kind {
        ElemKind::U8 => AnyVolume::U8(decode_raw(shape, voxel_size, &bytes)?),
        ElemKind::U32 => AnyVolume::U32(decode_raw(shape, voxel_size, &bytes)?),
        ElemKind::F32 => AnyVolume::F32(decode_raw(shape, voxel_size, &bytes)?),
    })
}

/// Reads a volume and insists on a particular element kind.
pub fn read_typed<T: Element>(path: impl AsRef<Path>) -> Result<Volume<T>> {
    read_volume(path)?.into_typed()
}

fn decode_raw<T: Element>(shape: Shape, voxel_size: VoxelSize, bytes: &[u8]) -> Result<Volume<T>> {
    let width = T::KIND.size();
    let data = bytes.chunks_exact(width).map(T::from_le).collect();
    Volume::new(shape, voxel_size, data)
}

/// Writes the header to `path` and the raw array next to it.
pub fn write_volume<T: Element>(v: &Volume<T>, path: impl AsRef<Path>) -> Result<()> {
    v.validate()?;
    let path = path.as_ref();
    let raw_path = raw_path_for(path);
    let data_file = raw_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| Error::Invariant(format!("bad output path {}", path.display())))?;
    let header = Header {
        shape: v.shape().0,
        elem: T::KIND.name().to_string(),
        voxel_size_um: v.voxel_size().0,
        data_file,
        order: "C".into(),
        endianness: "little".into(),
    };

    let mut bytes = Vec::with_capacity(v.len() * T::KIND.size());
    for &x in v.data() {
        x.extend_le(&mut bytes);
    }
    fs::write(&raw_path, &bytes).map_err(|e| io_err(&raw_path, e))?;

    let mut text = serde_json::to_string_pretty(&header).expect("header serializes");
    text.push('\n');
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| io_err(path, e))?;
    Ok(())
}
