//! Bit I/O and the per-step joint Shannon code.
//!
//! For a group of components the code covers every index tuple whose
//! probability (product of the per-component PMFs) is at least
//! [`PMF_FLOOR`], plus one escape symbol carrying the remaining mass. Each
//! symbol gets length `⌈−log2 q⌉` and a canonical codeword: shorter
//! lengths first, ties broken by enumeration order (lexicographic in the
//! component indices), escape last. An escaped tuple is followed by an
//! Elias-gamma code of each component's zigzagged offset from its PMF mode.

use super::pmf::{ConditionalPmf, PMF_FLOOR};
use crate::error::{Error, Result};

const MAX_LEN: usize = 63;

/// A finished run of bits, most significant bit first.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BitChunk {
    pub bytes: Vec<u8>,
    pub nbits: usize,
}

#[derive(Default)]
pub struct BitWriter {
    chunk: BitChunk,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_bit(&mut self, bit: bool) {
        if self.chunk.nbits % 8 == 0 {
            self.chunk.bytes.push(0);
        }
        if bit {
            let last = self.chunk.bytes.len() - 1;
            self.chunk.bytes[last] |= 0x80 >> (self.chunk.nbits % 8);
        }
        self.chunk.nbits += 1;
    }

    pub fn push_bits(&mut self, value: u64, n: usize) {
        for k in (0..n).rev() {
            self.push_bit((value >> k) & 1 == 1);
        }
    }

    pub fn len(&self) -> usize {
        self.chunk.nbits
    }

    pub fn is_empty(&self) -> bool {
        self.chunk.nbits == 0
    }

    pub fn finish(self) -> BitChunk {
        self.chunk
    }
}

pub struct BitReader<'a> {
    chunk: &'a BitChunk,
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(chunk: &'a BitChunk) -> Self {
        BitReader { chunk, pos: 0 }
    }

    pub fn read_bit(&mut self) -> Result<bool> {
        if self.pos >= self.chunk.nbits {
            return Err(Error::BitstreamCorrupt("ran out of bits".into()));
        }
        let bit = self.chunk.bytes[self.pos / 8] & (0x80 >> (self.pos % 8)) != 0;
        self.pos += 1;
        Ok(bit)
    }

    pub fn remaining(&self) -> usize {
        self.chunk.nbits - self.pos
    }
}

pub fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

pub fn unzigzag(u: u64) -> i64 {
    ((u >> 1) as i64) ^ -((u & 1) as i64)
}

/// Elias-gamma code of `v ≥ 1`.
pub fn write_gamma(w: &mut BitWriter, v: u64) {
    let n = 64 - v.leading_zeros() as usize;
    w.push_bits(0, n - 1);
    w.push_bits(v, n);
}

pub fn read_gamma(r: &mut BitReader) -> Result<u64> {
    let mut zeros = 0;
    while !r.read_bit()? {
        zeros += 1;
        if zeros > 63 {
            return Err(Error::BitstreamCorrupt("Elias-gamma prefix too long".into()));
        }
    }
    let mut v = 1u64;
    for _ in 0..zeros {
        v = (v << 1) | r.read_bit()? as u64;
    }
    Ok(v)
}

fn code_length(q: f64) -> usize {
    ((-q.log2()).ceil() as usize).clamp(1, MAX_LEN)
}

/// Calls `f(tuple, q)` for every tuple with probability at least
/// [`PMF_FLOOR`], in lexicographic order of the indices.
fn enumerate<F: FnMut(&[i64], f64)>(pmfs: &[ConditionalPmf], f: &mut F) {
    let n = pmfs.len();
    // suffix[k] = product of the largest probabilities of components k..
    let mut suffix = vec![1.0; n + 1];
    for k in (0..n).rev() {
        suffix[k] = suffix[k + 1] * pmfs[k].max_prob();
    }
    let mut tuple = vec![0i64; n];
    fn rec<F: FnMut(&[i64], f64)>(
        k: usize,
        q: f64,
        pmfs: &[ConditionalPmf],
        suffix: &[f64],
        tuple: &mut Vec<i64>,
        f: &mut F,
    ) {
        if k == pmfs.len() {
            f(tuple, q);
            return;
        }
        for (off, p) in pmfs[k].probs.iter().enumerate() {
            let qk = q * p;
            if qk * suffix[k + 1] < PMF_FLOOR {
                continue;
            }
            tuple[k] = pmfs[k].i_min + off as i64;
            rec(k + 1, qk, pmfs, suffix, tuple, f);
        }
    }
    rec(0, 1.0, pmfs, &suffix, &mut tuple, f);
}

/// Symbol counts per code length.
struct Table {
    counts: [u64; MAX_LEN + 1],
    /// Tuples (not the escape) per length.
    tuple_counts: [u64; MAX_LEN + 1],
    escape_len: usize,
    escape_rank: u64,
}

impl Table {
    fn build(pmfs: &[ConditionalPmf], mut visit: impl FnMut(&[i64], usize, u64)) -> Result<Table> {
        let mut counts = [0u64; MAX_LEN + 1];
        let mut mass = 0.0;
        enumerate(pmfs, &mut |t, q| {
            let l = code_length(q);
            visit(t, l, counts[l]);
            counts[l] += 1;
            mass += q;
        });
        let tuple_counts = counts;
        let q_esc = (1.0 - mass).max(PMF_FLOOR);
        let mut escape_len = code_length(q_esc);
        loop {
            let kraft: u128 = (1..=MAX_LEN)
                .map(|l| {
                    let c = counts[l] + (l == escape_len) as u64;
                    (c as u128) << (MAX_LEN - l)
                })
                .sum();
            if kraft <= 1u128 << MAX_LEN {
                break;
            }
            if escape_len == MAX_LEN {
                return Err(Error::BitstreamCorrupt("code table violates Kraft".into()));
            }
            escape_len += 1;
        }
        let escape_rank = counts[escape_len];
        counts[escape_len] += 1;
        Ok(Table { counts, tuple_counts, escape_len, escape_rank })
    }

    /// First canonical codeword of each length.
    fn first_codes(&self) -> [u64; MAX_LEN + 2] {
        let mut first = [0u64; MAX_LEN + 2];
        for l in 1..MAX_LEN {
            first[l + 1] = (first[l] + self.counts[l]) << 1;
        }
        first
    }
}

/// Outcome of encoding one group.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GroupBits {
    pub bits: usize,
    pub escaped: bool,
}

/// Appends the codeword of `tuple` to `w`.
pub fn encode_group(w: &mut BitWriter, pmfs: &[ConditionalPmf], tuple: &[i64]) -> Result<GroupBits> {
    let mut hit = None;
    let table = Table::build(pmfs, |t, l, rank| {
        if hit.is_none() && t == tuple {
            hit = Some((l, rank));
        }
    })?;
    let first = table.first_codes();
    let start = w.len();
    match hit {
        Some((l, rank)) => {
            w.push_bits(first[l] + rank, l);
        }
        None => {
            let l = table.escape_len;
            w.push_bits(first[l] + table.escape_rank, l);
            for (pmf, j) in pmfs.iter().zip(tuple) {
                write_gamma(w, zigzag(j - pmf.mode()) + 1);
            }
        }
    }
    Ok(GroupBits { bits: w.len() - start, escaped: hit.is_none() })
}

/// Reads one group's codeword and returns the index tuple.
pub fn decode_group(r: &mut BitReader, pmfs: &[ConditionalPmf]) -> Result<(Vec<i64>, bool)> {
    let table = Table::build(pmfs, |_, _, _| {})?;
    let first = table.first_codes();
    let mut code = 0u64;
    for l in 1..=MAX_LEN {
        code = (code << 1) | r.read_bit()? as u64;
        if code >= first[l] && code - first[l] < table.counts[l] {
            let rank = code - first[l];
            if l == table.escape_len && rank == table.escape_rank {
                let mut tuple = Vec::with_capacity(pmfs.len());
                for pmf in pmfs {
                    let z = read_gamma(r)? - 1;
                    tuple.push(pmf.mode() + unzigzag(z));
                }
                return Ok((tuple, true));
            }
            if rank >= table.tuple_counts[l] {
                return Err(Error::BitstreamCorrupt("codeword past table end".into()));
            }
            let mut found = None;
            let mut seen = 0u64;
            enumerate(pmfs, &mut |t, q| {
                if found.is_none() && code_length(q) == l {
                    if seen == rank {
                        found = Some(t.to_vec());
                    }
                    seen += 1;
                }
            });
            return found
                .map(|t| (t, false))
                .ok_or_else(|| Error::BitstreamCorrupt("codeword not in table".into()));
        }
    }
    Err(Error::BitstreamCorrupt("no codeword matched".into()))
}
