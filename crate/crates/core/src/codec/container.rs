//! Byte layout of a coded stream.
//!
//! ```text
//! magic    4 bytes  "ZDKF"
//! version  u16 LE
//! p        u16 LE
//! seed     u64 LE
//! D        f64 LE
//! model    8 bytes  first bytes of SHA-256 over (p u32, q u32, A row-major
//!                   f64, B row-major f64), all little-endian
//! n        u64 LE   number of steps
//! n chunks, each: LEB128 bit count, then ⌈bits/8⌉ bytes, MSB first
//! ```

use sha2::{Digest, Sha256};

use super::{BitChunk, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::model::StateSpaceModel;

pub const MAGIC: [u8; 4] = *b"ZDKF";

#[derive(Clone, Debug, PartialEq)]
pub struct Header {
    pub version: u16,
    pub p: u16,
    pub seed: u64,
    pub distortion: f64,
    pub model_hash: [u8; 8],
    pub n: u64,
}

pub fn model_hash(m: &StateSpaceModel) -> [u8; 8] {
    let mut h = Sha256::new();
    h.update((m.p() as u32).to_le_bytes());
    h.update((m.q() as u32).to_le_bytes());
    for mat in [&m.a, &m.b] {
        for row in mat.row_iter() {
            for v in row.iter() {
                h.update(v.to_le_bytes());
            }
        }
    }
    let digest = h.finalize();
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    out
}

impl Header {
    pub fn new(m: &StateSpaceModel, seed: u64, distortion: f64, n: u64) -> Self {
        Header {
            version: FORMAT_VERSION,
            p: m.p() as u16,
            seed,
            distortion,
            model_hash: model_hash(m),
            n,
        }
    }
}

fn write_varint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

fn read_varint(bytes: &[u8], pos: &mut usize) -> Result<u64> {
    let mut v = 0u64;
    for shift in (0..64).step_by(7) {
        let b = *bytes
            .get(*pos)
            .ok_or_else(|| Error::BitstreamCorrupt("truncated length prefix".into()))?;
        *pos += 1;
        v |= ((b & 0x7f) as u64) << shift;
        if b & 0x80 == 0 {
            return Ok(v);
        }
    }
    Err(Error::BitstreamCorrupt("length prefix too long".into()))
}

pub fn write_stream(header: &Header, chunks: &[BitChunk]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&header.version.to_le_bytes());
    out.extend_from_slice(&header.p.to_le_bytes());
    out.extend_from_slice(&header.seed.to_le_bytes());
    out.extend_from_slice(&header.distortion.to_le_bytes());
    out.extend_from_slice(&header.model_hash);
    out.extend_from_slice(&(chunks.len() as u64).to_le_bytes());
    for c in chunks {
        write_varint(&mut out, c.nbits as u64);
        out.extend_from_slice(&c.bytes);
    }
    out
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8]> {
    let s = bytes
        .get(*pos..*pos + n)
        .ok_or_else(|| Error::BitstreamCorrupt("truncated stream".into()))?;
    *pos += n;
    Ok(s)
}

pub fn read_stream(bytes: &[u8]) -> Result<(Header, Vec<BitChunk>)> {
    let mut pos = 0;
    if take(bytes, &mut pos, 4)? != MAGIC {
        return Err(Error::BitstreamCorrupt("bad magic".into()));
    }
    let u16_at = |pos: &mut usize| -> Result<u16> {
        Ok(u16::from_le_bytes(take(bytes, pos, 2)?.try_into().unwrap()))
    };
    let u64_at = |pos: &mut usize| -> Result<u64> {
        Ok(u64::from_le_bytes(take(bytes, pos, 8)?.try_into().unwrap()))
    };
    let version = u16_at(&mut pos)?;
    if version != FORMAT_VERSION {
        return Err(Error::BitstreamCorrupt(format!("unsupported version {version}")));
    }
    let p = u16_at(&mut pos)?;
    let seed = u64_at(&mut pos)?;
    let distortion = f64::from_bits(u64_at(&mut pos)?);
    let mut model_hash = [0u8; 8];
    model_hash.copy_from_slice(take(bytes, &mut pos, 8)?);
    let n = u64_at(&mut pos)?;
    let mut chunks = Vec::with_capacity(n.min(1 << 24) as usize);
    for _ in 0..n {
        let nbits = read_varint(bytes, &mut pos)? as usize;
        let data = take(bytes, &mut pos, nbits.div_ceil(8))?;
        chunks.push(BitChunk { bytes: data.to_vec(), nbits });
    }
    if pos != bytes.len() {
        return Err(Error::BitstreamCorrupt("trailing bytes".into()));
    }
    Ok((Header { version, p, seed, distortion, model_hash, n }, chunks))
}
