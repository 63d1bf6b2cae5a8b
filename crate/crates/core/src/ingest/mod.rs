//! Raw phasor frames to standardized, overlapping feature windows.

pub mod cache;
pub mod csv;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// |V| per phase, |I| per phase, cosθ per phase.
pub const FEATURE_COUNT: usize = 9;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "v_mag_a", "v_mag_b", "v_mag_c", "i_mag_a", "i_mag_b", "i_mag_c", "pf_a", "pf_b", "pf_c",
];

/// Default reporting rate in frames per second.
pub const DEFAULT_SAMPLE_RATE: f64 = 120.0;

/// Zero-variance floor for fitted standard deviations.
pub const EPS_NORM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawFrame {
    /// Microseconds since epoch.
    pub timestamp: i64,
    pub v_mag: [f64; 3],
    pub v_ang: [f64; 3],
    pub i_mag: [f64; 3],
    pub i_ang: [f64; 3],
}

impl RawFrame {
    fn check(&self) -> Result<()> {
        let all = self
            .v_mag
            .iter()
            .chain(&self.v_ang)
            .chain(&self.i_mag)
            .chain(&self.i_ang);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                timestamp: self.timestamp,
                reason: "non-finite channel".into(),
            });
        }
        if self.v_mag.iter().chain(&self.i_mag).any(|&m| m < 0.0) {
            return Err(Error::Parse {
                timestamp: self.timestamp,
                reason: "negative magnitude".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureFrame {
    pub timestamp: i64,
    pub f: [f64; FEATURE_COUNT],
}

/// Magnitudes pass through; power factor is `cos(v_ang - i_ang)` per phase.
pub fn derive_features(frame: &RawFrame) -> Result<FeatureFrame> {
    frame.check()?;
    let mut f = [0.0; FEATURE_COUNT];
    for p in 0..3 {
        f[p] = frame.v_mag[p];
        f[3 + p] = frame.i_mag[p];
        f[6 + p] = (frame.v_ang[p] - frame.i_ang[p]).cos().clamp(-1.0, 1.0);
    }
    Ok(FeatureFrame {
        timestamp: frame.timestamp,
        f,
    })
}

pub fn derive_all(frames: &[RawFrame]) -> Result<Vec<FeatureFrame>> {
    frames.iter().map(derive_features).collect()
}

/// Per-feature standardization statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; FEATURE_COUNT],
    pub std: [f64; FEATURE_COUNT],
}

impl NormStats {
    #[inline]
    pub fn normalize(&self, feature: usize, x: f64) -> f64 {
        (x - self.mean[feature]) / self.std[feature]
    }

    #[inline]
    pub fn denormalize(&self, feature: usize, z: f64) -> f64 {
        z * self.std[feature] + self.mean[feature]
    }
}

/// Mean and population std per feature, std floored at [`EPS_NORM`].
pub fn fit_norm_stats(stream: &[FeatureFrame]) -> Result<NormStats> {
    if stream.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} frames for normalization, need 2",
            stream.len()
        )));
    }
    let n = stream.len() as f64;
    let mut mean = [0.0; FEATURE_COUNT];
    for fr in stream {
        for (m, v) in mean.iter_mut().zip(&fr.f) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; FEATURE_COUNT];
    for fr in stream {
        for k in 0..FEATURE_COUNT {
            let d = fr.f[k] - mean[k];
            var[k] += d * d;
        }
    }
    let std = var.map(|v| (v / n).sqrt().max(EPS_NORM));
    Ok(NormStats { mean, std })
}

/// A standardized `9 x len` block of consecutive samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub index: usize,
    /// Sample index of the first column within the stream.
    pub start: usize,
    pub start_ts: i64,
    pub len: usize,
    /// Row-major, `FEATURE_COUNT x len`.
    pub samples: Vec<f64>,
}

impl Window {
    pub fn row(&self, feature: usize) -> &[f64] {
        &self.samples[feature * self.len..(feature + 1) * self.len]
    }

    /// Sample index one past the last column.
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Windowed {
    pub windows: Vec<Window>,
    /// Set when some segment was shorter than one window.
    pub short_segments: usize,
}

/// Windows over one contiguous stream. Window `w` starts at `w * (len - overlap)`;
/// a trailing partial window is dropped.
pub fn windowize(
    stream: &[FeatureFrame],
    stats: &NormStats,
    len: usize,
    overlap: usize,
) -> Result<Windowed> {
    windowize_segments(
        stream,
        std::slice::from_ref(&(0..stream.len())),
        stats,
        len,
        overlap,
    )
}

/// Like [`windowize`], but windows never straddle segment boundaries.
/// Window indices run consecutively across segments.
pub fn windowize_segments(
    stream: &[FeatureFrame],
    segments: &[std::ops::Range<usize>],
    stats: &NormStats,
    len: usize,
    overlap: usize,
) -> Result<Windowed> {
    if len == 0 || overlap >= len {
        return Err(Error::InvalidArgument(format!(
            "overlap {overlap} must be below window length {len}"
        )));
    }
    let stride = len - overlap;
    let mut out = Windowed::default();
    for seg in segments {
        if seg.len() < len {
            out.short_segments += 1;
            if !seg.is_empty() {
                log::warn!(
                    "segment of {} samples is shorter than one window ({len})",
                    seg.len()
                );
            }
            continue;
        }
        let mut start = seg.start;
        while start + len <= seg.end {
            let mut samples = vec![0.0; FEATURE_COUNT * len];
            for (c, fr) in stream[start..start + len].iter().enumerate() {
                for k in 0..FEATURE_COUNT {
                    samples[k * len + c] = stats.normalize(k, fr.f[k]);
                }
            }
            out.windows.push(Window {
                index: out.windows.len(),
                start,
                start_ts: stream[start].timestamp,
                len,
                samples,
            });
            start += stride;
        }
    }
    Ok(out)
}

/// Splits a stream wherever consecutive timestamps differ by more than
/// `max_gap_periods` nominal sample periods.
pub fn split_segments(
    stream: &[FeatureFrame],
    sample_rate: f64,
    max_gap_periods: f64,
) -> Vec<std::ops::Range<usize>> {
    if stream.is_empty() {
        return Vec::new();
    }
    let limit = max_gap_periods * 1e6 / sample_rate;
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..stream.len() {
        if (stream[i].timestamp - stream[i - 1].timestamp) as f64 > limit {
            out.push(start..i);
            start = i;
        }
    }
    out.push(start..stream.len());
    out
}
