//! Little-endian weight file:
//!
//! ```text
//! "XUGT" | u32 version = 1 | u32 tensor count
//! per tensor: u16 name length | UTF-8 name | u8 ndim | u32 dims[ndim] | f32 data
//! u64 FNV-1a digest of every preceding byte
//! ```

use std::collections::HashMap;
use std::hash::Hasher;
use std::io::Write;
use std::path::Path;

use fnv::FnvHasher;

use super::{build_model, Init, Model, ModelConfig};
use crate::error::{Result, WeightsError};
use crate::params::VisitParams;

pub const MAGIC: &[u8; 4] = b"XUGT";
pub const VERSION: u32 = 1;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

/// Serializes `m` into a byte buffer.
pub fn write_weights(m: &Model) -> Vec<u8> {
    let mut buf = Vec::with_capacity(m.stored_len() * 4 + 4096);
    let mut count = 0u32;
    m.visit("", &mut |_, _, _, _| count += 1);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&count.to_le_bytes());
    m.visit("", &mut |name, shape, _, data| {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(shape.len() as u8);
        for &d in shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    });
    let digest = fnv1a(&buf);
    buf.extend_from_slice(&digest.to_le_bytes());
    buf
}

pub fn save_weights(m: &Model, path: impl AsRef<Path>) -> Result<()> {
    let bytes = write_weights(m);
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.flush()?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>, cfg: &ModelConfig) -> Result<Model> {
    let bytes = std::fs::read(path)?;
    read_weights(&bytes, cfg)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

/// Parses a weight file against the shapes `cfg` implies.
pub fn read_weights(bytes: &[u8], cfg: &ModelConfig) -> Result<Model> {
    let mut model = build_model(cfg, Init::Zeros)?;
    let mut expected: HashMap<String, Vec<usize>> = HashMap::new();
    model.visit("", &mut |name, shape, _, _| {
        expected.insert(name.to_string(), shape.to_vec());
    });

    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4).ok_or(WeightsError::TruncatedHeader)?;
    if magic != MAGIC {
        return Err(WeightsError::BadMagic(magic.try_into().unwrap()).into());
    }
    let version = r.u32().ok_or(WeightsError::TruncatedHeader)?;
    if version != VERSION {
        return Err(WeightsError::UnsupportedVersion(version).into());
    }
    let count = r.u32().ok_or(WeightsError::TruncatedHeader)?;

    let mut loaded: HashMap<String, Vec<f32>> = HashMap::new();
    let mut last_name = String::from("<header>");
    for _ in 0..count {
        let trunc = |n: &str| WeightsError::TruncatedTensor(n.to_string());
        let name_len = r.u16().ok_or_else(|| trunc(&last_name))? as usize;
        let name_bytes = r.take(name_len).ok_or_else(|| trunc(&last_name))?;
        let name = std::str::from_utf8(name_bytes)
            .map_err(|_| WeightsError::BadName)?
            .to_string();
        let ndim = r.u8().ok_or_else(|| trunc(&name))? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(r.u32().ok_or_else(|| trunc(&name))? as usize);
        }
        let Some(want) = expected.get(&name) else {
            return Err(WeightsError::UnknownTensor(name).into());
        };
        if *want != dims {
            return Err(WeightsError::ShapeMismatch {
                name,
                expected: want.clone(),
                found: dims,
            }
            .into());
        }
        let numel: usize = dims.iter().product();
        let raw = numel
            .checked_mul(4)
            .and_then(|n| r.take(n))
            .ok_or_else(|| trunc(&name))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if loaded.insert(name.clone(), data).is_some() {
            return Err(WeightsError::DuplicateTensor(name).into());
        }
        last_name = name;
    }
    let body_end = r.pos;
    let stored = r.u64().ok_or(WeightsError::TruncatedTensor(last_name))?;
    let computed = fnv1a(&bytes[..body_end]);
    if stored != computed {
        return Err(WeightsError::DigestMismatch { stored, computed }.into());
    }
    if r.pos != bytes.len() {
        return Err(WeightsError::TrailingBytes(bytes.len() - r.pos).into());
    }

    let mut missing = None;
    model.visit_mut("", &mut |name, _, _, dst| match loaded.remove(name) {
        Some(src) => dst.copy_from_slice(&src),
        None => {
            missing.get_or_insert_with(|| name.to_string());
        }
    });
    if let Some(name) = missing {
        return Err(WeightsError::MissingTensor(name).into());
    }
    Ok(model)
}
