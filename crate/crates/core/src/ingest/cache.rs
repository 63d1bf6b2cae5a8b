//! Binary cache of standardized windows, so training sweeps skip CSV parsing.
//!
//! Layout (little-endian): magic `GSWC`, version, window length, overlap,
//! feature count, the nine means and nine stds, window count, then per window
//! its index, start sample, start timestamp and `9 x len` values.

use std::path::Path;

use super::{NormStats, Window, FEATURE_COUNT};
use crate::binio::{read_file, write_file, Reader, Writer};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"GSWC";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct WindowCache {
    pub window_len: usize,
    pub overlap: usize,
    pub stats: NormStats,
    pub windows: Vec<Window>,
}

pub fn encode(cache: &WindowCache) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u32(cache.window_len as u32);
    w.u32(cache.overlap as u32);
    w.u32(FEATURE_COUNT as u32);
    cache
        .stats
        .mean
        .iter()
        .chain(&cache.stats.std)
        .for_each(|&v| w.f64(v));
    w.u64(cache.windows.len() as u64);
    for win in &cache.windows {
        w.u64(win.index as u64);
        w.u64(win.start as u64);
        w.i64(win.start_ts);
        win.samples.iter().for_each(|&v| w.f64(v));
    }
    w.buf
}

pub fn decode(bytes: &[u8]) -> Result<WindowCache> {
    let mut r = Reader::new(bytes);
    r.expect_magic(MAGIC)?;
    r.expect_version(VERSION)?;
    let window_len = r.u32()? as usize;
    let overlap = r.u32()? as usize;
    let features = r.u32()? as usize;
    if features != FEATURE_COUNT {
        return Err(Error::Corrupt(format!("feature count {features}")));
    }
    let mut stats = NormStats {
        mean: [0.0; FEATURE_COUNT],
        std: [0.0; FEATURE_COUNT],
    };
    for m in &mut stats.mean {
        *m = r.f64()?;
    }
    for s in &mut stats.std {
        *s = r.f64()?;
    }
    let n = r.u64()? as usize;
    let per = FEATURE_COUNT * window_len;
    let mut windows = Vec::with_capacity(n.min(bytes.len() / (per * 8).max(1)));
    for _ in 0..n {
        let index = r.u64()? as usize;
        let start = r.u64()? as usize;
        let start_ts = r.i64()?;
        let raw = r.take(per * 8)?;
        let samples = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8")))
            .collect();
        windows.push(Window {
            index,
            start,
            start_ts,
            len: window_len,
            samples,
        });
    }
    r.finish()?;
    Ok(WindowCache {
        window_len,
        overlap,
        stats,
        windows,
    })
}

pub fn save(path: &Path, cache: &WindowCache) -> Result<()> {
    write_file(path, &encode(cache))
}

pub fn load(path: &Path) -> Result<WindowCache> {
    decode(&read_file(path)?)
}
