//! Binary checkpoint format.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! "HALN" | version: u32 | tensor count: u32
//! per tensor: name length: u32 | UTF-8 name | rank: u32 | dims: u64 * rank | f64 * prod(dims)
//! CRC32 of every preceding byte: u32
//! ```
//!
//! Two bookkeeping tensors precede the weights: `meta` holds
//! `[in_channels, feature_h, feature_w]` and `frozen` holds the four freeze
//! flags as 0/1.

use std::path::Path;

use crate::error::{Error, Result};
use crate::regression::{FrozenSet, ModelState};

pub const MAGIC: &[u8; 4] = b"HALN";
pub const FORMAT_VERSION: u32 = 1;

const META: &str = "meta";
const FROZEN: &str = "frozen";

fn put_tensor(buf: &mut Vec<u8>, name: &str, dims: &[usize], data: &[f64]) {
    buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn to_bytes(m: &ModelState) -> Vec<u8> {
    let tensors = m.named_tensors();
    let mut buf = Vec::with_capacity(16 + m.parameter_count() * 8 + tensors.len() * 64);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&((tensors.len() + 2) as u32).to_le_bytes());
    let (fh, fw) = m.feature_hw();
    put_tensor(&mut buf, META, &[3], &[m.channels() as f64, fh as f64, fw as f64]);
    let flags = m.frozen.to_flags().map(|f| if f { 1.0 } else { 0.0 });
    put_tensor(&mut buf, FROZEN, &[4], &flags);
    for (name, dims, data) in &tensors {
        put_tensor(&mut buf, name, dims, data);
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

/// The CRC32 stored in the serialized model.
pub fn checksum(m: &ModelState) -> u32 {
    let bytes = to_bytes(m);
    u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::MalformedCheckpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn tensor(&mut self) -> Result<(String, Vec<usize>, Vec<f64>)> {
        let name_len = self.u32()? as usize;
        let name = std::str::from_utf8(self.take(name_len)?)
            .map_err(|_| Error::MalformedCheckpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = self.u32()? as usize;
        let dims = (0..rank).map(|_| self.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let count = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::MalformedCheckpoint(format!("tensor {name}: dims overflow")))?;
        let raw = self.take(count.checked_mul(8).ok_or_else(|| Error::MalformedCheckpoint("payload overflow".into()))?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok((name, dims, data))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelState> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(Error::MalformedCheckpoint("missing HALN magic".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    let mut r = Reader { bytes: body, pos: 4 };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    let count = r.u32()? as usize;
    let (name, _, meta) = r.tensor()?;
    if name != META || meta.len() != 3 || meta.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
        return Err(Error::MalformedCheckpoint("first tensor must be meta [channels, feature_h, feature_w]".into()));
    }
    let (name, _, flags) = r.tensor()?;
    if name != FROZEN || flags.len() != 4 {
        return Err(Error::MalformedCheckpoint("second tensor must be the 4 freeze flags".into()));
    }
    let channels = meta[0] as usize;
    if channels != 1 && channels != 3 {
        return Err(Error::MalformedCheckpoint(format!("unsupported channel count {channels}")));
    }
    let mut m = ModelState::zeros_for_features(channels, (meta[1] as usize, meta[2] as usize));
    m.frozen = FrozenSet::from_flags([flags[0] != 0.0, flags[1] != 0.0, flags[2] != 0.0, flags[3] != 0.0]);

    let expected: Vec<(String, Vec<usize>)> = m.named_tensors().into_iter().map(|(n, d, _)| (n, d)).collect();
    if count != expected.len() + 2 {
        return Err(Error::MalformedCheckpoint(format!("expected {} tensors, found {count}", expected.len() + 2)));
    }
    for ((exp_name, exp_dims), (_, slot)) in expected.iter().zip(m.tensors_mut()) {
        let (name, dims, data) = r.tensor()?;
        if &name != exp_name || &dims != exp_dims {
            return Err(Error::MalformedCheckpoint(format!("expected tensor {exp_name} {exp_dims:?}, found {name} {dims:?}")));
        }
        *slot = data;
    }
    if r.pos != body.len() {
        return Err(Error::MalformedCheckpoint(format!("{} trailing bytes", body.len() - r.pos)));
    }
    Ok(m)
}

pub fn save_checkpoint(m: &ModelState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(m)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelState> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
