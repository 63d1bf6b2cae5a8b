//! Detection vectors, window merging and pre-processing categories.

pub mod category;
pub mod merge;
pub mod store;
pub mod vector;

use serde::{Deserialize, Serialize};

pub use category::{category_name, reference_keys, Category, CategoryKey, CategoryRegistry};
pub use merge::{merge_windows, EventRecord, FlaggedWindow, MergeConfig};
pub use store::{EventStore, IndexEntry};
pub use vector::{DetectionVector, Group};

use crate::error::Result;
use crate::gan::WindowScores;
use crate::ingest::{FeatureFrame, Window};

/// Pairs each window with the detection vector built from its nine flags.
pub fn flag_windows(windows: &[Window], scores: &[WindowScores]) -> Result<Vec<FlaggedWindow>> {
    if windows.len() != scores.len() {
        return Err(crate::Error::Shape {
            expected: format!("{} window scores", windows.len()),
            got: scores.len().to_string(),
        });
    }
    windows
        .iter()
        .zip(scores)
        .map(|(w, s)| {
            let flags: Vec<Option<bool>> = s.flags.iter().map(|&b| Some(b)).collect();
            Ok(FlaggedWindow {
                index: w.index,
                start: w.start,
                len: w.len,
                vector: DetectionVector::assemble(&flags)?,
            })
        })
        .collect()
}

/// Merges flagged windows and assigns categories through `registry`.
pub fn extract_events(
    flagged: &[FlaggedWindow],
    stream: &[FeatureFrame],
    cfg: MergeConfig,
    stream_id: &str,
    first_id: u64,
    registry: &mut CategoryRegistry,
) -> Result<Vec<EventRecord>> {
    let mut events = merge_windows(flagged, stream, cfg, stream_id, first_id)?;
    for e in &mut events {
        e.category = registry.categorize(&e.vector)?;
    }
    Ok(events)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub id: u32,
    pub name: String,
    pub key: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRateReport {
    pub samples: usize,
    pub hours: f64,
    pub events: usize,
    pub per_category: Vec<CategoryCount>,
    pub flagged_samples: usize,
    pub flagged_fraction: f64,
    pub events_per_hour: f64,
}

/// Per-category counts (registry order), flagged-sample fraction and rate.
pub fn event_rate_report(
    samples: usize,
    sample_rate: f64,
    events: &[EventRecord],
    registry: &CategoryRegistry,
) -> EventRateReport {
    let hours = samples as f64 / sample_rate / 3600.0;
    let flagged_samples: usize = events.iter().map(|e| e.len).sum();
    let per_category = registry
        .categories
        .iter()
        .map(|c| CategoryCount {
            id: c.id,
            name: category_name(c.id),
            key: c.key.label(),
            count: events.iter().filter(|e| e.category == c.id).count(),
        })
        .collect();
    EventRateReport {
        samples,
        hours,
        events: events.len(),
        per_category,
        flagged_samples,
        flagged_fraction: if samples == 0 {
            0.0
        } else {
            flagged_samples as f64 / samples as f64
        },
        events_per_hour: if hours > 0.0 {
            events.len() as f64 / hours
        } else {
            0.0
        },
    }
}
