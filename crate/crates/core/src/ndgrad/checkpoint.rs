//! Flat binary parameter blob.
//!
//! ```text
//! "NDG1"                      4 bytes magic
//! count          u32 LE       number of parameters
//! repeated count times:
//!   name_len     u32 LE
//!   name         UTF-8, name_len bytes
//!   rank         u32 LE
//!   dims         rank × u64 LE
//!   data         prod(dims) × f64 LE
//! ```

use std::fs;
use std::path::Path;

use super::{DenseArray, NdError, ParamSet};

pub const MAGIC: &[u8; 4] = b"NDG1";

pub fn encode(set: &ParamSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + set.scalar_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(set.len() as u32).to_le_bytes());
    for p in set.params() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.value.shape().len() as u32).to_le_bytes());
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NdError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| NdError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NdError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, NdError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ParamSet, NdError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(NdError::Checkpoint("bad magic, expected NDG1".into()));
    }
    let count = r.u32()?;
    let mut set = ParamSet::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|e| NdError::Checkpoint(format!("parameter name: {e}")))?
            .to_owned();
        let rank = r.u32()? as usize;
        let dims = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| NdError::Checkpoint(format!("{name}: dims overflow")))?;
        let raw = r.take(n.checked_mul(8).ok_or_else(|| NdError::Checkpoint("size overflow".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        set.add(name, DenseArray::new(dims, data)?);
    }
    if r.pos != bytes.len() {
        return Err(NdError::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(set)
}

pub fn save(set: &ParamSet, path: impl AsRef<Path>) -> Result<(), NdError> {
    fs::write(path, encode(set)).map_err(|e| NdError::Checkpoint(e.to_string()))
}

pub fn load(path: impl AsRef<Path>) -> Result<ParamSet, NdError> {
    let bytes = fs::read(path.as_ref())
        .map_err(|e| NdError::Checkpoint(format!("{}: {e}", path.as_ref().display())))?;
    decode(&bytes)
}
