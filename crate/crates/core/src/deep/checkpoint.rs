//! Binary checkpoint format, all fields little-endian:
//!
//! ```text
//! "DCZT" | u32 version | u32 M | u32 N | f64 f_start | f64 f_end | f64 fs
//!        | M*2N f64 w_tilde | M*2N f64 w_tilde_init | u32 CRC32(all prior bytes)
//! ```

use std::sync::Arc;

use super::DeepCztModel;
use crate::czt::CztPlan;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DCZT";
pub const CHECKPOINT_VERSION: u32 = 1;

const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8 * 3;

pub fn save_checkpoint(model: &DeepCztModel) -> Vec<u8> {
    let plan = model.plan();
    let params = model.w_tilde().len();
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * params + 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(plan.m_bins() as u32).to_le_bytes());
    out.extend_from_slice(&(plan.n_input() as u32).to_le_bytes());
    out.extend_from_slice(&plan.f_start_hz().to_le_bytes());
    out.extend_from_slice(&plan.f_end_hz().to_le_bytes());
    out.extend_from_slice(&plan.sample_rate_hz().to_le_bytes());
    for w in model.w_tilde().iter().chain(model.w_tilde_init()) {
        out.extend_from_slice(&w.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::TruncatedCheckpoint)?;
        let bytes = self.buf.get(self.pos..end).ok_or(Error::TruncatedCheckpoint)?;
        self.pos = end;
        Ok(bytes)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<DeepCztModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic, expected DCZT".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let m = r.u32()? as usize;
    let n = r.u32()? as usize;
    let f_start = r.f64()?;
    let f_end = r.f64()?;
    let fs = r.f64()?;
    let params = m
        .checked_mul(2)
        .and_then(|v| v.checked_mul(n))
        .ok_or_else(|| Error::Checkpoint(format!("dimensions {m}x{n} overflow")))?;
    let body = params
        .checked_mul(16)
        .and_then(|v| v.checked_add(HEADER_LEN + 4))
        .ok_or_else(|| Error::Checkpoint(format!("dimensions {m}x{n} overflow")))?;
    if bytes.len() < body {
        return Err(Error::TruncatedCheckpoint);
    }
    if bytes.len() > body {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after checksum",
            bytes.len() - body
        )));
    }
    let w_tilde = r.f64s(params)?;
    let w_tilde_init = r.f64s(params)?;
    let payload_len = r.pos;
    let stored = r.u32()?;
    let computed = crc32fast::hash(&bytes[..payload_len]);
    if stored != computed {
        return Err(Error::Checkpoint(format!(
            "checksum mismatch (stored {stored:08x}, computed {computed:08x})"
        )));
    }
    if w_tilde.iter().chain(&w_tilde_init).any(|w| !(w.abs() <= 1.0)) {
        return Err(Error::Checkpoint("weights outside [-1, 1]".into()));
    }
    let plan = CztPlan::new(n, m, f_start, f_end, fs)
        .map_err(|e| Error::Checkpoint(format!("stored plan is invalid: {e}")))?;
    Ok(DeepCztModel::from_parts(Arc::new(plan), w_tilde, w_tilde_init))
}
