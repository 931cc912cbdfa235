//! Binary chain archive.
//!
//! ```text
//! "GHSCHN01"
//! u64 p, burnin, nmc, thin, seed, flags          (little endian)
//! f64 tau                                        if flags & FIXED_TAU
//! u64 count, capacity                            if flags & SUMMARY
//! f64 payload ...
//! u64 FNV-1a of every preceding byte
//! ```
//!
//! The payload of a full chain is its packed draws (upper triangle with the
//! diagonal, row-major), one after another. A summary chain stores the running
//! mean, the running sum of squared deviations, then the reservoir draws.

use std::fs;
use std::path::Path;

use crate::chain::{Chain, StoragePolicy};
use crate::error::{GhsError, Result};
use crate::gibbs::GhsConfig;
use crate::matrix::packed_len;

pub const MAGIC: &[u8; 8] = b"GHSCHN01";
pub const FLAG_SUMMARY: u64 = 1;
pub const FLAG_FIXED_TAU: u64 = 2;
/// Magic plus six header words and the checksum footer.
pub const BASE_OVERHEAD: usize = 8 + 6 * 8 + 8;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn encode_chain(chain: &Chain) -> Vec<u8> {
    let cfg = chain.config();
    let summary = chain.summary_parts();
    let mut flags = 0;
    if summary.is_some() {
        flags |= FLAG_SUMMARY;
    }
    if cfg.fixed_tau.is_some() {
        flags |= FLAG_FIXED_TAU;
    }
    let mut out = Vec::with_capacity(BASE_OVERHEAD + 8 * chain.packed_draws().len() + 64);
    out.extend_from_slice(MAGIC);
    for word in [chain.dim() as u64, cfg.burnin as u64, cfg.nmc as u64, cfg.thin as u64, chain.rng_seed(), flags] {
        out.extend_from_slice(&word.to_le_bytes());
    }
    if let Some(tau) = cfg.fixed_tau {
        out.extend_from_slice(&tau.to_le_bytes());
    }
    let put = |xs: &[f64], out: &mut Vec<u8>| xs.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
    match summary {
        None => put(chain.packed_draws(), &mut out),
        Some((count, capacity, mean, m2, reservoir)) => {
            out.extend_from_slice(&(count as u64).to_le_bytes());
            out.extend_from_slice(&(capacity as u64).to_le_bytes());
            put(mean, &mut out);
            put(m2, &mut out);
            put(reservoir, &mut out);
        }
    }
    let sum = fnv1a64(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn word(&mut self) -> Result<[u8; 8]> {
        let end = self.pos + 8;
        let w = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| GhsError::Corruption("archive truncated".into()))?;
        self.pos = end;
        Ok(w.try_into().expect("8 bytes"))
    }

    fn u64(&mut self) -> Result<u64> {
        self.word().map(u64::from_le_bytes)
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| GhsError::Corruption("header value out of range".into()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.word().map(f64::from_le_bytes)).collect()
    }
}

pub fn decode_chain(bytes: &[u8]) -> Result<Chain> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(GhsError::Format("not a chain archive (bad magic)".into()));
    }
    if bytes.len() < BASE_OVERHEAD {
        return Err(GhsError::Corruption("archive truncated".into()));
    }
    let (body, footer) = bytes.split_at(bytes.len() - 8);
    if fnv1a64(body) != u64::from_le_bytes(footer.try_into().expect("8 bytes")) {
        return Err(GhsError::Corruption("checksum mismatch".into()));
    }
    let mut r = Reader { bytes: body, pos: 8 };
    let p = r.usize()?;
    let burnin = r.usize()?;
    let nmc = r.usize()?;
    let thin = r.usize()?;
    let seed = r.u64()?;
    let flags = r.u64()?;
    if flags & !(FLAG_SUMMARY | FLAG_FIXED_TAU) != 0 {
        return Err(GhsError::Format(format!("unknown archive flags {flags:#x}")));
    }
    if p == 0 {
        return Err(GhsError::Corruption("zero dimension".into()));
    }
    let mut config = GhsConfig::new(burnin, nmc);
    config.thin = thin;
    if flags & FLAG_FIXED_TAU != 0 {
        config.fixed_tau = Some(f64::from_le_bytes(r.word()?));
    }
    let len = packed_len(p);
    let chain = if flags & FLAG_SUMMARY != 0 {
        let count = r.usize()?;
        let capacity = r.usize()?;
        config.storage = StoragePolicy::Summary { reservoir: capacity };
        let mean = r.f64s(len)?;
        let m2 = r.f64s(len)?;
        let rest = (body.len() - r.pos) / 8;
        let reservoir = r.f64s(rest)?;
        Chain::from_summary(p, config, seed, count, capacity, mean, m2, reservoir)
    } else {
        config.storage = StoragePolicy::Full;
        let rest = (body.len() - r.pos) / 8;
        Chain::from_packed(p, config, seed, r.f64s(rest)?)
    };
    if r.pos != body.len() {
        return Err(GhsError::Corruption("trailing bytes in payload".into()));
    }
    chain.map_err(|e| GhsError::Corruption(e.to_string()))
}

pub fn save_chain(chain: &Chain, path: &Path) -> Result<()> {
    fs::write(path, encode_chain(chain))?;
    Ok(())
}

pub fn load_chain(path: &Path) -> Result<Chain> {
    decode_chain(&fs::read(path)?)
}
