//! Binary parameter checkpoints.
//!
//! Layout: the magic bytes `MINCKPT1`, then for each named tensor: name length
//! (u32 LE), UTF-8 name, rank (u32 LE), each extent (u32 LE), and the raw
//! little-endian `f64` payload. Entries run to end of file.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{MinError, Result};

use super::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"MINCKPT1";

pub fn encode(entries: &[(String, Tensor)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    for (name, t) in entries {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &e in t.shape() {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Vec<(String, Tensor)>> {
    let bad = |detail: &str| MinError::Malformed { path: path.to_path_buf(), detail: detail.to_string() };
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(bad("missing MINCKPT1 magic"));
    }
    let mut cur = Cursor { bytes, pos: MAGIC.len() };
    let mut entries = Vec::new();
    while cur.pos < bytes.len() {
        let name_len = cur.u32().ok_or_else(|| bad("truncated name length"))? as usize;
        let name = cur.take(name_len).ok_or_else(|| bad("truncated name"))?;
        let name = String::from_utf8(name.to_vec()).map_err(|_| bad("name is not UTF-8"))?;
        let rank = cur.u32().ok_or_else(|| bad("truncated rank"))? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u32().ok_or_else(|| bad("truncated extents"))? as usize);
        }
        let n: usize = shape.iter().product();
        let payload = cur.take(n.checked_mul(8).ok_or_else(|| bad("extent overflow"))?).ok_or_else(|| bad("truncated payload"))?;
        let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let t = Tensor::new(shape, data).map_err(|e| bad(&e.to_string()))?;
        entries.push((name, t));
    }
    Ok(entries)
}

pub fn save(path: &Path, entries: &[(String, Tensor)]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(entries))?;
    f.sync_all()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let bytes = fs::read(path)?;
    decode(&bytes, path)
}
