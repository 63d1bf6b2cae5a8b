use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rustfft::FftNum;
use sha2::{Digest, Sha256};

use super::{AlignedPair, Correlator, EventMatrix, MccConfig, RowFilter};
use crate::binio::{read_file, write_file, Reader, Writer};
use crate::error::{Error, Result};
use crate::ingest::FEATURE_COUNT;
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"GSSM";
pub const VERSION: u32 = 1;

/// Pairwise MCC values for a set of events, row-major `n x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix<T> {
    pub ids: Vec<u64>,
    pub values: Vec<T>,
}

impl<T: Scalar> SimilarityMatrix<T> {
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.n() + j]
    }

    /// Distances `1 - MCC`, the clustering cost.
    pub fn distances(&self) -> Vec<T> {
        self.values.iter().map(|&v| T::one() - v).collect()
    }

    /// Sub-matrix over the given positions, in that order.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            ids: idx.iter().map(|&i| self.ids[i]).collect(),
            values: idx
                .iter()
                .flat_map(|&i| idx.iter().map(move |&j| (i, j)))
                .map(|(i, j)| self.get(i, j))
                .collect(),
        }
    }

    pub fn check(&self) -> Result<()> {
        let n = self.n();
        if self.values.len() != n * n {
            return Err(Error::Shape {
                expected: format!("{n} x {n}"),
                got: self.values.len().to_string(),
            });
        }
        for i in 0..n {
            if self.get(i, i) != T::one() {
                return Err(Error::Consistency(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..i {
                let v = self.get(i, j);
                if v != self.get(j, i) || !(v.abs() <= T::one()) {
                    return Err(Error::Consistency(format!(
                        "entry ({i}, {j}) is asymmetric or out of range"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Evaluates every unordered pair once and mirrors it, so the result is
/// exactly symmetric with a unit diagonal. Rows run in parallel.
pub fn build_similarity_matrix<T: Scalar + FftNum>(
    ids: &[u64],
    events: &[EventMatrix<T>],
    cfg: &MccConfig,
) -> Result<SimilarityMatrix<T>> {
    if ids.len() != events.len() || events.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} ids for {} events; need at least one event",
            ids.len(),
            events.len()
        )));
    }
    let n = events.len();
    let upper: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map_init(Correlator::<T>::default, |corr, i| {
            ((i + 1)..n)
                .map(|j| corr.mcc(&AlignedPair::new(&events[i], &events[j], cfg)))
                .collect()
        })
        .collect();
    let mut values = vec![T::one(); n * n];
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + 1 + off;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    Ok(SimilarityMatrix {
        ids: ids.to_vec(),
        values,
    })
}

/// File name for a category's matrix over exactly these events and settings.
pub fn cache_key(category: u32, ids: &[u64], cfg: &MccConfig) -> String {
    let mut h = Sha256::new();
    for id in ids {
        h.update(id.to_le_bytes());
    }
    h.update(cfg.eps_var.to_le_bytes());
    h.update([matches!(cfg.rows, RowFilter::Flagged) as u8]);
    for s in cfg.scale {
        h.update(s.to_le_bytes());
    }
    let digest = h.finalize();
    let hex: String = digest[..12].iter().map(|b| format!("{b:02x}")).collect();
    format!("sim-c{category}-{hex}.gsm")
}

pub fn encode<T: Scalar>(m: &SimilarityMatrix<T>) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u8(T::WIDTH);
    w.u64(m.ids.len() as u64);
    for &id in &m.ids {
        w.u64(id);
    }
    w.scalars(&m.values);
    w.buf
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<SimilarityMatrix<T>> {
    let mut r = Reader::new(bytes);
    r.expect_magic(MAGIC)?;
    r.expect_version(VERSION)?;
    let width = r.u8()?;
    if width != T::WIDTH {
        return Err(Error::Corrupt(format!(
            "scalar width {width}, expected {}",
            T::WIDTH
        )));
    }
    let n = r.len(1 << 20)?;
    let ids = (0..n).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
    let values = r.scalars(n * n)?;
    r.finish()?;
    let m = SimilarityMatrix { ids, values };
    m.check().map_err(|e| Error::Corrupt(e.to_string()))?;
    Ok(m)
}

/// Directory of cached matrices keyed by category and event id set.
#[derive(Debug, Clone)]
pub struct SimilarityCache {
    pub dir: PathBuf,
}

impl SimilarityCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn path(&self, category: u32, ids: &[u64], cfg: &MccConfig) -> PathBuf {
        self.dir.join(cache_key(category, ids, cfg))
    }

    /// Cached matrix if present and valid, otherwise computed and stored.
    pub fn get_or_build<T: Scalar + FftNum>(
        &self,
        category: u32,
        ids: &[u64],
        events: &[EventMatrix<T>],
        cfg: &MccConfig,
    ) -> Result<SimilarityMatrix<T>> {
        let path = self.path(category, ids, cfg);
        if let Ok(m) = load::<T>(&path) {
            if m.ids == ids {
                return Ok(m);
            }
        }
        let m = build_similarity_matrix(ids, events, cfg)?;
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        write_file(&path, &encode(&m))?;
        Ok(m)
    }
}

pub fn load<T: Scalar>(path: &Path) -> Result<SimilarityMatrix<T>> {
    decode(&read_file(path)?)
}

/// Standardization scale for the variance test from per-feature stds.
pub fn scale_from_std(std: &[f64; FEATURE_COUNT]) -> [f64; FEATURE_COUNT] {
    std::array::from_fn(|f| if std[f] > 0.0 { std[f] } else { 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event(seed: u64, len: usize) -> EventMatrix<f64> {
        let data = (0..FEATURE_COUNT * len)
            .map(|k| ((k as u64 * 2654435761 + seed * 97) % 1000) as f64 / 1000.0)
            .collect();
        EventMatrix::new(len, data).unwrap()
    }

    #[test]
    fn single_and_identical() {
        let cfg = MccConfig::default();
        let one = build_similarity_matrix(&[4], &[event(1, 30)], &cfg).unwrap();
        assert_eq!(one.values, vec![1.0]);
        let e = event(2, 25);
        let three = build_similarity_matrix(&[1, 2, 3], &[e.clone(), e.clone(), e], &cfg).unwrap();
        assert!(three.values.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        three.check().unwrap();
    }

    #[test]
    fn symmetric_with_mixed_lengths() {
        let evs: Vec<_> = (0..5).map(|k| event(k, 20 + 7 * k as usize)).collect();
        let m = build_similarity_matrix(&[0, 1, 2, 3, 4], &evs, &MccConfig::default()).unwrap();
        m.check().unwrap();
        let sub = m.select(&[3, 1]);
        assert_eq!(sub.ids, vec![3, 1]);
        assert_eq!(sub.get(0, 1), m.get(3, 1));
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = SimilarityCache::new(dir.path());
        let evs: Vec<_> = (0..3).map(|k| event(k, 30)).collect();
        let cfg = MccConfig::default();
        let a = cache.get_or_build(2, &[5, 6, 7], &evs, &cfg).unwrap();
        let path = dir.path().join(cache_key(2, &[5, 6, 7], &cfg));
        assert!(path.exists());
        assert_eq!(load::<f64>(&path).unwrap(), a);
        assert_ne!(
            cache_key(2, &[5, 6, 7], &cfg),
            cache_key(3, &[5, 6, 7], &cfg)
        );
        assert_ne!(cache_key(2, &[5, 6, 7], &cfg), cache_key(2, &[5, 6], &cfg));
        let bytes = encode(&a);
        assert!(decode::<f64>(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode::<f32>(&bytes).is_err());
    }
}
