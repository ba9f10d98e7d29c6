//! Volume, field and mask files.
//!
//! Layout (little-endian):
//!
//! | bytes  | content                                      |
//! |--------|----------------------------------------------|
//! | 4      | magic `SQFV`                                 |
//! | 2      | format version (`1`)                         |
//! | 1      | kind: 0 volume, 1 field, 2 mask              |
//! | 1      | spatial dimension `d`, 1 to 4                |
//! | 8·d    | `u64` extents                                |
//! | 8·d    | `f64` voxel spacing                          |
//! | 8·P    | `f64` payload, row-major                     |
//!
//! `P` is the voxel count for volumes and masks and `d` times that for
//! fields, stored channel-first. Mask labels are stored as integral floats.

use std::path::Path;

use super::binary::{push_f64s, Reader};
use super::write_atomic;
use crate::diffcore::NdArray;
use crate::error::{Error, Result};
use crate::objective::{DeformationField, ImageVolume, LabelMask};
use crate::ode_flow::Domain;

const MAGIC: &[u8; 4] = b"SQFV";
const VERSION: u16 = 1;
const MAX_DIM: usize = 4;

/// Payload kind tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Volume,
    Field,
    Mask,
}

impl FileKind {
    fn tag(self) -> u8 {
        match self {
            FileKind::Volume => 0,
            FileKind::Field => 1,
            FileKind::Mask => 2,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(FileKind::Volume),
            1 => Some(FileKind::Field),
            2 => Some(FileKind::Mask),
            _ => None,
        }
    }
}

/// Any decoded file.
#[derive(Debug, Clone)]
pub enum Stored {
    Volume(ImageVolume),
    Field(DeformationField),
    Mask(LabelMask),
}

fn encode(kind: FileKind, domain: &Domain, payload: &[f64]) -> Vec<u8> {
    let d = domain.ndim();
    let mut out = Vec::with_capacity(8 + 16 * d + 8 * payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(kind.tag());
    out.push(d as u8);
    for &n in domain.shape() {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    push_f64s(&mut out, domain.spacing());
    push_f64s(&mut out, payload);
    out
}

pub fn encode_volume(vol: &ImageVolume) -> Vec<u8> {
    encode(FileKind::Volume, vol.domain(), vol.intensities().data())
}

pub fn encode_field(field: &DeformationField) -> Vec<u8> {
    encode(FileKind::Field, field.domain(), field.mapping().data())
}

pub fn encode_mask(mask: &LabelMask) -> Vec<u8> {
    let values: Vec<f64> = mask.labels().iter().map(|&l| f64::from(l)).collect();
    encode(FileKind::Mask, mask.domain(), &values)
}

/// Parses any SQFV file.
pub fn decode(bytes: &[u8]) -> Result<Stored> {
    let mut r = Reader::new(bytes);
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Parse { offset: 0, msg: "bad magic, expected SQFV".into() });
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(Error::Parse { offset: 4, msg: format!("unsupported version {version}") });
    }
    let tag = r.u8("kind")?;
    let kind = FileKind::from_tag(tag).ok_or_else(|| Error::Parse { offset: 6, msg: format!("unknown kind {tag}") })?;
    let d = r.u8("dimension")? as usize;
    if d == 0 || d > MAX_DIM {
        return Err(Error::Parse { offset: 7, msg: format!("dimension {d} outside 1..={MAX_DIM}") });
    }
    let mut shape = Vec::with_capacity(d);
    for _ in 0..d {
        let at = r.offset();
        let n = r.u64("extent")?;
        let n = usize::try_from(n)
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Parse { offset: at, msg: format!("invalid extent {n}") })?;
        shape.push(n);
    }
    let spacing_at = r.offset();
    let spacing = r.f64s(d, "spacing")?;
    let domain = Domain::new(shape.clone(), spacing).map_err(|e| Error::Parse { offset: spacing_at, msg: e.to_string() })?;
    let voxels = shape
        .iter()
        .try_fold(1usize, |a, &n| a.checked_mul(n))
        .ok_or_else(|| r.error("voxel count overflows"))?;
    let channels = if kind == FileKind::Field { d } else { 1 };
    let payload_at = r.offset();
    let payload = r.f64s(voxels.checked_mul(channels).ok_or_else(|| r.error("payload size overflows"))?, "payload")?;
    r.finish()?;
    let at = |e: Error| Error::Parse { offset: payload_at, msg: e.to_string() };
    Ok(match kind {
        FileKind::Volume => Stored::Volume(ImageVolume::new(domain, NdArray::new(shape, payload).map_err(at)?).map_err(at)?),
        FileKind::Field => {
            Stored::Field(DeformationField::new(domain.clone(), NdArray::new(domain.field_shape(), payload).map_err(at)?).map_err(at)?)
        }
        FileKind::Mask => {
            let mut labels = Vec::with_capacity(payload.len());
            for (i, v) in payload.iter().enumerate() {
                if !(v.fract() == 0.0 && *v >= 0.0 && *v <= f64::from(u32::MAX)) {
                    return Err(Error::Parse { offset: payload_at + 8 * i as u64, msg: format!("non-integral label {v}") });
                }
                labels.push(*v as u32);
            }
            Stored::Mask(LabelMask::new(domain, labels).map_err(at)?)
        }
    })
}

fn read(path: &Path) -> Result<Stored> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

fn wrong_kind(path: &Path, want: &str) -> Error {
    Error::Precondition(format!("{}: expected a {want} file", path.display()))
}

pub fn load_volume(path: &Path) -> Result<ImageVolume> {
    match read(path)? {
        Stored::Volume(v) => Ok(v),
        _ => Err(wrong_kind(path, "volume")),
    }
}

pub fn load_field(path: &Path) -> Result<DeformationField> {
    match read(path)? {
        Stored::Field(f) => Ok(f),
        _ => Err(wrong_kind(path, "field")),
    }
}

pub fn load_mask(path: &Path) -> Result<LabelMask> {
    match read(path)? {
        Stored::Mask(m) => Ok(m),
        _ => Err(wrong_kind(path, "mask")),
    }
}

pub fn save_volume(vol: &ImageVolume, path: &Path) -> Result<()> {
    write_atomic(path, &encode_volume(vol))
}

pub fn save_field(field: &DeformationField, path: &Path) -> Result<()> {
    write_atomic(path, &encode_field(field))
}

pub fn save_mask(mask: &LabelMask, path: &Path) -> Result<()> {
    write_atomic(path, &encode_mask(mask))
}
