//! CAMB v1: one file per image holding every (class, augmentation) CAM.
//!
//! ```text
//! "CAMB" | version u16 = 1 | flags u16 = 0
//! image_id_len u32 | image_id (UTF-8)
//! image_width u32 | image_height u32 | entry_count u32
//! per entry:
//!   class_id u32 | aug_tag u8 (0 identity, 1 hflip, 2 scaled)
//!   scale_short_side u32 (0 unless aug_tag = 2)
//!   map_h u32 | map_w u32 | map_h * map_w f32 values, row-major
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use super::{write_atomic, FormatError};
use crate::cam::{Augmentation, CamMap, CamStack};

pub const CAMB_MAGIC: [u8; 4] = *b"CAMB";
pub const CAMB_VERSION: u16 = 1;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return Err(FormatError::TruncatedPayload {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_camb(bytes: &[u8]) -> Result<CamStack, FormatError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != CAMB_MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let version = r.u16()?;
    if version != CAMB_VERSION {
        return Err(FormatError::BadVersion(version));
    }
    let flags = r.u16()?;
    if flags != 0 {
        return Err(FormatError::BadFlags(flags));
    }
    let id_len = r.u32()? as usize;
    let image_id = std::str::from_utf8(r.take(id_len)?)
        .map_err(|_| FormatError::BadImageId)?
        .to_owned();
    let image_width = r.u32()?;
    let image_height = r.u32()?;
    let entry_count = r.u32()? as usize;

    let mut stack = CamStack::new(image_id.clone(), image_width, image_height);
    for entry in 0..entry_count {
        let class_id = r.u32()?;
        let tag = r.u8()?;
        let scale = r.u32()?;
        let augmentation = match (tag, scale) {
            (0, 0) => Augmentation::Identity,
            (1, 0) => Augmentation::HFlip,
            (2, s) if s > 0 => Augmentation::Scaled(s),
            (0 | 1, s) => {
                return Err(FormatError::BadEntry {
                    entry,
                    reason: format!("scale_short_side {s} set on a non-scaled entry"),
                })
            }
            (2, _) => {
                return Err(FormatError::BadEntry {
                    entry,
                    reason: "scaled entry with scale_short_side 0".into(),
                })
            }
            (t, _) => {
                return Err(FormatError::BadEntry {
                    entry,
                    reason: format!("unknown augmentation tag {t}"),
                })
            }
        };
        let map_h = r.u32()? as usize;
        let map_w = r.u32()? as usize;
        if map_h == 0 || map_w == 0 {
            return Err(FormatError::BadEntry {
                entry,
                reason: format!("empty map {map_w}x{map_h}"),
            });
        }
        let n = map_h.checked_mul(map_w).and_then(|n| n.checked_mul(4));
        let raw = match n {
            Some(n) => r.take(n)?,
            None => {
                return Err(FormatError::TruncatedPayload {
                    offset: r.pos,
                    needed: usize::MAX,
                    available: bytes.len() - r.pos,
                })
            }
        };
        let mut values = Vec::with_capacity(map_h * map_w);
        for (index, chunk) in raw.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(FormatError::NonFiniteValue { entry, index });
            }
            values.push(f64::from(v));
        }
        let map = CamMap::new(map_w, map_h, values, class_id, image_id.clone()).map_err(|e| {
            FormatError::BadEntry {
                entry,
                reason: e.to_string(),
            }
        })?;
        stack.push(augmentation, map);
    }
    if r.pos != bytes.len() {
        return Err(FormatError::TrailingBytes(bytes.len() - r.pos));
    }
    Ok(stack)
}

/// Serializes a stack. Map values are narrowed to `f32`.
pub fn encode_camb(stack: &CamStack) -> Vec<u8> {
    let payload: usize = stack
        .entries
        .iter()
        .map(|e| 17 + 4 * e.map.values().len())
        .sum();
    let mut out = Vec::with_capacity(24 + stack.image_id.len() + payload);
    out.extend_from_slice(&CAMB_MAGIC);
    out.extend_from_slice(&CAMB_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(stack.image_id.len() as u32).to_le_bytes());
    out.extend_from_slice(stack.image_id.as_bytes());
    out.extend_from_slice(&stack.image_width.to_le_bytes());
    out.extend_from_slice(&stack.image_height.to_le_bytes());
    out.extend_from_slice(&(stack.entries.len() as u32).to_le_bytes());
    for e in &stack.entries {
        let (tag, scale) = match e.augmentation {
            Augmentation::Identity => (0u8, 0u32),
            Augmentation::HFlip => (1, 0),
            Augmentation::Scaled(s) => (2, s),
        };
        out.extend_from_slice(&e.class_id.to_le_bytes());
        out.push(tag);
        out.extend_from_slice(&scale.to_le_bytes());
        out.extend_from_slice(&(e.map.height() as u32).to_le_bytes());
        out.extend_from_slice(&(e.map.width() as u32).to_le_bytes());
        for &v in e.map.values() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn read_camb(path: &Path) -> Result<CamStack, FormatError> {
    let bytes = std::fs::read(path).map_err(|e| FormatError::io(path, e))?;
    decode_camb(&bytes)
}

pub fn write_camb(stack: &CamStack, path: &Path) -> Result<(), FormatError> {
    write_atomic(path, &encode_camb(stack))
}
