//! Run-length mask encoding used on disk and on the wire.
//!
//! Runs alternate starting with a zero-run over the row-major bit buffer.
//! The leading zero-run may be 0; no other run is ever 0 in encoder output.

use serde::{Deserialize, Serialize};

use super::raster::Mask;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub w: u32,
    pub h: u32,
    pub runs: Vec<u64>,
}

impl RleMask {
    pub fn encode(m: &Mask) -> Self {
        encode_rle(m)
    }

    pub fn decode(&self) -> Result<Mask> {
        decode_rle(self)
    }

    pub fn area(&self) -> u64 {
        self.runs.iter().skip(1).step_by(2).sum()
    }
}

pub fn encode_rle(m: &Mask) -> RleMask {
    let mut runs = Vec::new();
    let mut current = 0u8;
    let mut len = 0u64;
    for &b in m.bits() {
        if b != current {
            runs.push(len);
            current = b;
            len = 0;
        }
        len += 1;
    }
    runs.push(len);
    RleMask { w: m.width(), h: m.height(), runs }
}

pub fn decode_rle(r: &RleMask) -> Result<Mask> {
    if r.w == 0 || r.h == 0 {
        return Err(Error::Format(format!("rle dimensions must be positive, got {}x{}", r.w, r.h)));
    }
    let n = r.w as u64 * r.h as u64;
    let total = r.runs.iter().try_fold(0u64, |acc, &x| acc.checked_add(x));
    if total != Some(n) {
        return Err(Error::Format(format!(
            "rle runs sum to {}, {}x{} mask needs {n}",
            total.map_or_else(|| "overflow".to_string(), |t| t.to_string()),
            r.w,
            r.h
        )));
    }
    let mut bits = Vec::with_capacity(n as usize);
    for (i, &len) in r.runs.iter().enumerate() {
        let v = (i % 2) as u8;
        bits.resize(bits.len() + len as usize, v);
    }
    Mask::from_bits(r.w, r.h, bits)
}
