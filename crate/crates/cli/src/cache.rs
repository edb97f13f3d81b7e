//! Binary score-cache format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  b"NDSC"
//! version u16      currently 1
//! hash    32 bytes sha256 of the raw data-file bytes
//! r       u16      in-degree cap the tables were built with
//! ess     f64      equivalent sample size
//! n       u16      variable count
//! per node:
//!   node  u16
//!   count u32      number of (mask, value) entries
//!   entries: count x (mask u64, value f64), ascending mask
//! ```
//!
//! Writes are byte-deterministic: rebuilding the same cache yields an
//! identical file.

use std::path::Path;

use netdisco::scoring::FamilyScoreTable;

use crate::{CliError, CliResult};

const MAGIC: &[u8; 4] = b"NDSC";
const VERSION: u16 = 1;

pub struct CacheKey {
    pub data_hash: [u8; 32],
    pub r: u16,
    pub ess: f64,
}

pub fn write_cache(path: &Path, key: &CacheKey, tables: &[FamilyScoreTable]) -> CliResult<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&key.data_hash);
    buf.extend_from_slice(&key.r.to_le_bytes());
    buf.extend_from_slice(&key.ess.to_le_bytes());
    buf.extend_from_slice(&(tables.len() as u16).to_le_bytes());
    for t in tables {
        buf.extend_from_slice(&(t.node() as u16).to_le_bytes());
        buf.extend_from_slice(&(t.len() as u32).to_le_bytes());
        for (parents, value) in t.iter() {
            buf.extend_from_slice(&parents.mask().to_le_bytes());
            buf.extend_from_slice(&value.to_le_bytes());
        }
    }
    std::fs::write(path, buf)
        .map_err(|e| anyhow::anyhow!("cannot write cache {}: {e}", path.display()))?;
    Ok(())
}

pub fn read_cache(path: &Path) -> CliResult<(CacheKey, Vec<FamilyScoreTable>)> {
    let bytes = std::fs::read(path)
        .map_err(|e| anyhow::anyhow!("cannot read cache {}: {e}", path.display()))?;
    let bad = |msg: &str| {
        CliError::data(anyhow::anyhow!("cache {} is not usable: {msg}", path.display()))
    };
    let mut at = 0usize;
    let mut take = |len: usize| -> CliResult<&[u8]> {
        if at + len > bytes.len() {
            return Err(bad("truncated"));
        }
        let s = &bytes[at..at + len];
        at += len;
        Ok(s)
    };
    if take(4)? != MAGIC {
        return Err(bad("wrong magic"));
    }
    let version = u16::from_le_bytes(take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(bad("unsupported version"));
    }
    let data_hash: [u8; 32] = take(32)?.try_into().unwrap();
    let r = u16::from_le_bytes(take(2)?.try_into().unwrap());
    let ess = f64::from_le_bytes(take(8)?.try_into().unwrap());
    let n = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
    let mut tables = Vec::with_capacity(n);
    for _ in 0..n {
        let node = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
        let count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let mask = u64::from_le_bytes(take(8)?.try_into().unwrap());
            let value = f64::from_le_bytes(take(8)?.try_into().unwrap());
            entries.push((mask, value));
        }
        if !entries.windows(2).all(|w| w[0].0 < w[1].0) {
            return Err(bad("entries out of order"));
        }
        tables.push(FamilyScoreTable::from_entries(node, r as usize, ess, entries));
    }
    if at != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok((CacheKey { data_hash, r, ess }, tables))
}

/// A cache is only reusable for the exact data bytes and scoring
/// parameters it was built from.
pub fn check_key(path: &Path, key: &CacheKey, expect: &CacheKey) -> CliResult<()> {
    if key.data_hash != expect.data_hash {
        return Err(CliError::data(anyhow::anyhow!(
            "cache {} was built for different data (hash mismatch)",
            path.display()
        )));
    }
    if key.r != expect.r {
        return Err(CliError::data(anyhow::anyhow!(
            "cache {} was built with r={}, requested r={}",
            path.display(),
            key.r,
            expect.r
        )));
    }
    if key.ess != expect.ess {
        return Err(CliError::data(anyhow::anyhow!(
            "cache {} was built with ess={}, requested ess={}",
            path.display(),
            key.ess,
            expect.ess
        )));
    }
    Ok(())
}
