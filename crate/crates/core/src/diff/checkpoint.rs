//! Versioned binary tensor files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   "EFFTNSR\0"
//! version    u32       1
//! count      u32       number of tensors
//! directory  count × { name_len u32, name utf-8, rows u64, cols u64, offset u64 }
//! data       f64 little-endian values, row-major; offset counts bytes from
//!            the start of the data section
//! ```
//!
//! Hyperparameters and RNG state live in a JSON manifest written next to the
//! binary file by the caller.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::graph::Mat;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"EFFTNSR\0";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode_tensors<'a>(tensors: impl IntoIterator<Item = (&'a str, &'a Mat)>) -> Vec<u8> {
    let tensors: Vec<_> = tensors.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    let mut offset = 0u64;
    for (name, m) in &tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
        out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
        out.extend_from_slice(&offset.to_le_bytes());
        offset += (m.len() * 8) as u64;
    }
    for (_, m) in &tensors {
        for v in m.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<(String, Mat)>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version}"
        )));
    }
    let count = r.u32()? as usize;
    let mut directory = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|e| Error::Checkpoint(format!("tensor name: {e}")))?
            .to_string();
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let offset = r.u64()? as usize;
        directory.push((name, rows, cols, offset));
    }
    let data = &bytes[r.pos..];
    directory
        .into_iter()
        .map(|(name, rows, cols, offset)| {
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::Checkpoint(format!("{name}: shape overflow")))?;
            let end = offset
                .checked_add(n * 8)
                .filter(|&e| e <= data.len())
                .ok_or_else(|| Error::Checkpoint(format!("{name}: data out of range")))?;
            let values = data[offset..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let m = Mat::from_shape_vec((rows, cols), values)
                .map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
            Ok((name, m))
        })
        .collect()
}

pub fn write_tensors<'a>(
    path: &Path,
    tensors: impl IntoIterator<Item = (&'a str, &'a Mat)>,
) -> Result<String> {
    let bytes = encode_tensors(tensors);
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn read_tensors(path: &Path) -> Result<Vec<(String, Mat)>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensors(&bytes)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
