//! Binary dataset snapshot with the generating seed and a SHA-256 hash of
//! the dataset spec, so a cached file is only reused for the same spec.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::{Dataset, NormStats};
use crate::cells::TimedSequence;
use crate::error::{Error, Result};
use crate::numcore::Vector;

pub const CACHE_MAGIC: &[u8; 8] = b"LODEDATA";
pub const CACHE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct CachedData {
    pub seed: u64,
    pub spec_hash: [u8; 32],
    pub datasets: Vec<Dataset>,
}

/// SHA-256 of a canonical text rendering of a dataset spec.
pub fn spec_hash(canonical: &str) -> [u8; 32] {
    Sha256::digest(canonical.as_bytes()).into()
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format {
        what: "dataset cache",
        msg: msg.into(),
    }
}

fn put_len(out: &mut Vec<u8>, n: usize) -> Result<()> {
    let n = u32::try_from(n).map_err(|_| format_err(format!("count {n} does not fit in u32")))?;
    out.extend_from_slice(&n.to_le_bytes());
    Ok(())
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_sequence(out: &mut Vec<u8>, seq: &TimedSequence) -> Result<()> {
    put_len(out, seq.len())?;
    put_len(out, seq.dim())?;
    put_f64s(out, seq.times());
    for v in seq.values() {
        put_f64s(out, v);
    }
    Ok(())
}

pub fn encode_cache(data: &CachedData) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(&data.seed.to_le_bytes());
    out.extend_from_slice(&data.spec_hash);
    put_len(&mut out, data.datasets.len())?;
    for ds in &data.datasets {
        ds.validate()?;
        match &ds.stats {
            Some(stats) => {
                out.push(1);
                put_len(&mut out, stats.mean.len())?;
                put_f64s(&mut out, &stats.mean);
                put_f64s(&mut out, &stats.std);
            }
            None => out.push(0),
        }
        put_len(&mut out, ds.len())?;
        for i in 0..ds.len() {
            out.extend_from_slice(&ds.labels[i].to_le_bytes());
            put_sequence(&mut out, &ds.sequences[i])?;
            put_sequence(&mut out, &ds.targets[i])?;
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                format_err(format!(
                    "truncated while reading {what} at byte {}",
                    self.pos
                ))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    /// A count whose items take at least `item_bytes` each, bounded by the input size.
    fn count(&mut self, what: &str, item_bytes: usize) -> Result<usize> {
        let n = self.u32(what)? as usize;
        let remaining = self.buf.len() - self.pos;
        if n.saturating_mul(item_bytes.max(1)) > remaining {
            return Err(format_err(format!(
                "{what} = {n} exceeds the remaining {remaining} bytes"
            )));
        }
        Ok(n)
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| format_err("size overflow"))?,
            what,
        )?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn sequence(&mut self, what: &str) -> Result<TimedSequence> {
        let len = self.count(what, 8)?;
        let dim = self.u32(what)? as usize;
        let total = len
            .checked_mul(dim)
            .ok_or_else(|| format_err("size overflow"))?;
        if len > 0 && dim == 0 {
            return Err(format_err(format!("{what}: zero-dimensional values")));
        }
        let times = self.f64s(len, what)?;
        let flat = self.f64s(total, what)?;
        let values = flat
            .chunks(dim.max(1))
            .take(len)
            .map(Vector::from)
            .collect();
        TimedSequence::new(times, values).map_err(|e| format_err(format!("{what}: {e}")))
    }
}

pub fn decode_cache(bytes: &[u8]) -> Result<CachedData> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8, "magic")? != CACHE_MAGIC {
        return Err(format_err("bad magic; not a dataset cache"));
    }
    let version = r.u32("version")?;
    if version != CACHE_VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    let seed = r.u64("seed")?;
    let spec_hash: [u8; 32] = r.take(32, "spec hash")?.try_into().unwrap();
    let n_datasets = r.count("dataset count", 5)?;
    let mut datasets = Vec::with_capacity(n_datasets);
    for _ in 0..n_datasets {
        let stats = match r.take(1, "stats flag")?[0] {
            0 => None,
            1 => {
                let d = r.count("stats dim", 16)?;
                let mean = Vector::from_vec(r.f64s(d, "stats mean")?);
                let std = Vector::from_vec(r.f64s(d, "stats std")?);
                Some(NormStats { mean, std })
            }
            other => return Err(format_err(format!("invalid stats flag {other}"))),
        };
        let n = r.count("sequence count", 20)?;
        let mut ds = Dataset {
            stats,
            ..Dataset::default()
        };
        for _ in 0..n {
            let label = r.u32("label")?;
            let seq = r.sequence("sequence")?;
            let target = r.sequence("target")?;
            ds.push(seq, target, label);
        }
        ds.validate().map_err(|e| format_err(e.to_string()))?;
        datasets.push(ds);
    }
    if r.pos != bytes.len() {
        return Err(format_err(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(CachedData {
        seed,
        spec_hash,
        datasets,
    })
}

/// Reads `path` when it holds a cache for the same seed and spec hash;
/// otherwise calls `build` and writes its result to `path`.
pub fn load_or_build(
    path: &Path,
    seed: u64,
    hash: [u8; 32],
    build: impl FnOnce() -> Result<Vec<Dataset>>,
) -> Result<Vec<Dataset>> {
    if let Ok(bytes) = std::fs::read(path) {
        match decode_cache(&bytes) {
            Ok(c) if c.seed == seed && c.spec_hash == hash => return Ok(c.datasets),
            Ok(_) => log::info!("cache {} is for another spec; rebuilding", path.display()),
            Err(e) => log::warn!("ignoring unreadable cache {}: {e}", path.display()),
        }
    }
    let datasets = build()?;
    let bytes = encode_cache(&CachedData {
        seed,
        spec_hash: hash,
        datasets: datasets.clone(),
    })?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(datasets)
}
