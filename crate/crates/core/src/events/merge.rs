use serde::{Deserialize, Serialize};

use super::DetectionVector;
use crate::error::{Error, Result};
use crate::ingest::{FeatureFrame, FEATURE_COUNT};

pub const DEFAULT_PADDING: usize = 20;
/// Padded spans closer than this many quiet samples are one event.
pub const DEFAULT_MERGE_GAP: usize = 10;

/// A window's position in the stream and its detection vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlaggedWindow {
    pub index: usize,
    pub start: usize,
    pub len: usize,
    pub vector: DetectionVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub id: u64,
    pub start_ts: i64,
    /// Timestamp of the last sample in the span.
    pub end_ts: i64,
    /// First sample of the span in the source stream.
    pub start: usize,
    pub len: usize,
    /// Raw feature values, row-major `9 x len`.
    pub p: Vec<f64>,
    pub vector: DetectionVector,
    pub category: u32,
    pub stream: String,
    /// Indices of the flagged windows merged into this event.
    pub windows: Vec<usize>,
}

impl EventRecord {
    pub fn row(&self, feature: usize) -> &[f64] {
        &self.p[feature * self.len..(feature + 1) * self.len]
    }

    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn check(&self) -> Result<()> {
        if self.p.len() != FEATURE_COUNT * self.len {
            return Err(Error::Shape {
                expected: format!("{FEATURE_COUNT} x {}", self.len),
                got: self.p.len().to_string(),
            });
        }
        if self.start_ts >= self.end_ts {
            return Err(Error::Consistency(format!(
                "event {} has start_ts >= end_ts",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MergeConfig {
    pub padding: usize,
    pub merge_gap: usize,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            padding: DEFAULT_PADDING,
            merge_gap: DEFAULT_MERGE_GAP,
        }
    }
}

/// Coalesces flagged windows into events over `stream`, the de-normalized
/// feature frames the windows were cut from. Windows must be in time order;
/// unflagged windows are ignored. Categories are left at 0 for the caller.
pub fn merge_windows(
    windows: &[FlaggedWindow],
    stream: &[FeatureFrame],
    cfg: MergeConfig,
    stream_id: &str,
    first_id: u64,
) -> Result<Vec<EventRecord>> {
    if windows.windows(2).any(|w| w[1].start < w[0].start) {
        return Err(Error::InvalidArgument(
            "windows are not in time order".into(),
        ));
    }
    let n = stream.len();
    let mut groups: Vec<(usize, usize, DetectionVector, Vec<usize>)> = Vec::new();
    for w in windows.iter().filter(|w| w.vector.any()) {
        if w.start + w.len > n {
            return Err(Error::InvalidArgument(format!(
                "window {} runs past the stream",
                w.index
            )));
        }
        let lo = w.start.saturating_sub(cfg.padding);
        let hi = (w.start + w.len + cfg.padding).min(n);
        match groups.last_mut() {
            Some(g) if lo < g.1 + cfg.merge_gap => {
                g.1 = g.1.max(hi);
                g.2 = g.2.or(&w.vector);
                g.3.push(w.index);
            }
            _ => groups.push((lo, hi, w.vector, vec![w.index])),
        }
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(k, (lo, hi, vector, members))| {
            let len = hi - lo;
            let mut p = vec![0.0; FEATURE_COUNT * len];
            for (t, frame) in stream[lo..hi].iter().enumerate() {
                for f in 0..FEATURE_COUNT {
                    p[f * len + t] = frame.f[f];
                }
            }
            let rec = EventRecord {
                id: first_id + k as u64,
                start_ts: stream[lo].timestamp,
                end_ts: stream[hi - 1].timestamp,
                start: lo,
                len,
                p,
                vector,
                category: 0,
                stream: stream_id.to_string(),
                windows: members,
            };
            rec.check()?;
            Ok(rec)
        })
        .collect()
}
