//! Binary checkpoint container.
//!
//! All integers and floats are little-endian.
//!
//! | offset | size  | field                                              |
//! |--------|-------|----------------------------------------------------|
//! | 0      | 8     | magic `RCOLCKPT`                                    |
//! | 8      | 4     | schema version (`u32`, currently 1)                 |
//! | 12     | 28    | arch: window, enc_channels, ref_channels, attn_dim, value_dim, dec_channels, ref_stride (7 x `u32`) |
//! | 40     | 8     | init seed (`u64`)                                   |
//! | 48     | 8     | parameter count `n` (`u64`)                         |
//! | 56     | 8 n   | parameters (`f64`)                                  |
//! | 56+8n  | 8     | FNV-1a 64 of all preceding bytes                    |

use alloc::format;
use alloc::vec::Vec;

use super::{Arch, ModelState};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"RCOLCKPT";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 56;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn encode(state: &ModelState) -> Vec<u8> {
    encode_with_version(state, VERSION)
}

fn encode_with_version(state: &ModelState, version: u32) -> Vec<u8> {
    let a = state.arch();
    let theta = state.theta();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * theta.len() + 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&version.to_le_bytes());
    for d in [
        a.window,
        a.enc_channels,
        a.ref_channels,
        a.attn_dim,
        a.value_dim,
        a.dec_channels,
        a.ref_stride,
    ] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&state.init_seed().to_le_bytes());
    out.extend_from_slice(&(theta.len() as u64).to_le_bytes());
    for v in theta {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let sum = fnv1a(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Parse(format!("truncated while reading {what}"))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ModelState> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8, "magic")? != MAGIC {
        return Err(Error::Parse("not a checkpoint file (bad magic)".into()));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::IncompatibleCheckpoint {
            expected: VERSION,
            found: version,
        });
    }
    let mut dims = [0usize; 7];
    for d in dims.iter_mut() {
        *d = cur.u32("architecture")? as usize;
    }
    let arch = Arch {
        window: dims[0],
        enc_channels: dims[1],
        ref_channels: dims[2],
        attn_dim: dims[3],
        value_dim: dims[4],
        dec_channels: dims[5],
        ref_stride: dims[6],
    };
    let init_seed = cur.u64("init seed")?;
    let count = cur.u64("parameter count")?;
    let count = usize::try_from(count)
        .ok()
        .filter(|c| c.checked_mul(8).is_some())
        .ok_or_else(|| Error::Parse(format!("implausible parameter count {count}")))?;
    let payload = cur.take(count * 8, "parameters")?;
    let body_len = cur.pos;
    let stored = cur.u64("checksum")?;
    if cur.pos != bytes.len() {
        return Err(Error::Parse(format!(
            "{} trailing bytes after checksum",
            bytes.len() - cur.pos
        )));
    }
    if fnv1a(&bytes[..body_len]) != stored {
        return Err(Error::Parse("checksum mismatch".into()));
    }
    arch.validate()
        .map_err(|e| Error::Parse(format!("bad architecture descriptor: {e}")))?;
    let theta: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ModelState::from_parts(arch, theta, init_seed).map_err(|e| Error::Parse(format!("{e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        let state = ModelState::init(Arch::TOY, 42).unwrap();
        let decoded = decode(&encode(&state)).unwrap();
        assert_eq!(decoded.arch(), state.arch());
        assert_eq!(decoded.init_seed(), 42);
        assert!(decoded
            .theta()
            .iter()
            .zip(state.theta())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn version_mismatch() {
        let state = ModelState::init(Arch::TOY, 1).unwrap();
        let bytes = encode_with_version(&state, 7);
        assert_eq!(
            decode(&bytes),
            Err(Error::IncompatibleCheckpoint {
                expected: VERSION,
                found: 7
            })
        );
    }

    #[test]
    fn truncation_and_corruption() {
        let state = ModelState::init(Arch::TOY, 1).unwrap();
        let bytes = encode(&state);
        for cut in [0, 5, 20, HEADER_LEN, bytes.len() - 9, bytes.len() - 1] {
            assert!(matches!(decode(&bytes[..cut]), Err(Error::Parse(_))), "cut {cut}");
        }
        let mut flipped = bytes.clone();
        flipped[HEADER_LEN + 3] ^= 0x10;
        assert!(matches!(decode(&flipped), Err(Error::Parse(_))));
        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(decode(&extra), Err(Error::Parse(_))));
    }
}
