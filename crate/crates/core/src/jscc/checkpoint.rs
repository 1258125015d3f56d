//! `SJSC1` parameter container.
//!
//! ```text
//! "SJSC1"                      5 bytes
//! array count                  u32 LE
//! per array: ndims, dims...    u32 LE each
//! values of every array        f32 LE, row-major, in array order
//! ```

use crate::error::{Error, Result};
use crate::nn::{ModelParams, ParamArray};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"SJSC1";

pub fn save_checkpoint<T: Scalar>(params: &ModelParams<T>) -> Vec<u8> {
    let mut out = CHECKPOINT_MAGIC.to_vec();
    out.extend((params.arrays.len() as u32).to_le_bytes());
    for a in &params.arrays {
        out.extend((a.dims.len() as u32).to_le_bytes());
        for &d in &a.dims {
            out.extend((d as u32).to_le_bytes());
        }
    }
    for v in params.iter_values() {
        out.extend((v.as_f64() as f32).to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format(format!("checkpoint truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn load_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<ModelParams<T>> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(5)? != CHECKPOINT_MAGIC {
        return Err(Error::format("bad checkpoint magic"));
    }
    let count = c.u32()?;
    let mut dims_all = Vec::new();
    let mut total = 0usize;
    for _ in 0..count {
        let nd = c.u32()?;
        let mut dims = Vec::new();
        for _ in 0..nd {
            dims.push(c.u32()?);
        }
        let len = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        total = len
            .and_then(|l| total.checked_add(l))
            .filter(|&t| t.saturating_mul(4) <= bytes.len())
            .ok_or_else(|| Error::format("checkpoint dimensions exceed the stream"))?;
        dims_all.push(dims);
    }
    let mut arrays = Vec::with_capacity(count);
    for dims in dims_all {
        let len: usize = dims.iter().product();
        let raw = c.take(4 * len)?;
        let values = raw
            .chunks_exact(4)
            .map(|b| T::from_f64_lossy(f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))))
            .collect();
        arrays.push(ParamArray { dims, values });
    }
    if c.pos != bytes.len() {
        return Err(Error::format(format!("{} trailing bytes after checkpoint", bytes.len() - c.pos)));
    }
    Ok(ModelParams { arrays })
}

/// Header bytes for a parameter layout.
pub fn checkpoint_header_len<T>(params: &ModelParams<T>) -> usize {
    5 + 4 + params.arrays.iter().map(|a| 4 * (1 + a.dims.len())).sum::<usize>()
}
