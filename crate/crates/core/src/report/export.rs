use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{extract_event_features, EventFeatures, FeatureConfig};
use super::sequence::{mine_sequences, ClusterRef, SequenceMatch, SequenceRule, TimelineEvent};
use crate::cluster::ModelFile;
use crate::error::{Error, Result};
use crate::events::store::write_json;
use crate::events::{category_name, CategoryRegistry, EventRecord};

pub const CLUSTERS_NAME: &str = "clusters.json";
pub const SCATTER1_NAME: &str = "scatter_cluster1.csv";
pub const SCATTER2_NAME: &str = "scatter_cluster2.csv";
pub const SEQUENCES_NAME: &str = "sequences.json";
pub const SUMMARY_NAME: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub features: FeatureConfig,
    /// Quiet time allowed between chained events of a sequence.
    pub sequence_gap_s: f64,
    pub sequence_min_count: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            features: FeatureConfig::default(),
            sequence_gap_s: 60.0,
            sequence_min_count: 100,
        }
    }
}

/// Mean and percentiles of one feature over a cluster's members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
}

impl Stat {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        // Nearest-rank percentiles.
        let rank = |q: f64| s[((q * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1];
        Some(Self {
            mean: s.iter().sum::<f64>() / s.len() as f64,
            p10: rank(0.1),
            p50: rank(0.5),
            p90: rank(0.9),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    /// 1-based number across all categories, in category then cluster order.
    pub number: usize,
    pub category: u32,
    pub category_name: String,
    pub cluster: u32,
    pub count: usize,
    pub rate_per_day: f64,
    pub representative: u64,
    /// Members whose span was too short for feature extraction.
    pub skipped: usize,
    pub delta_iss_a: Option<Stat>,
    pub inr_a: Option<Stat>,
    pub transient_len: Option<Stat>,
    pub overshoot_len: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub category: u32,
    pub name: String,
    pub key: String,
    pub vectors: Vec<String>,
    pub events: usize,
    pub clusters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub duration_s: f64,
    pub events: usize,
    pub categories: Vec<SummaryRow>,
    pub clusters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub rule: SequenceRule,
    pub matches: Vec<SequenceMatch>,
}

/// Clusters enumerated across categories in registry order, then by id.
pub fn cluster_numbers(model: &ModelFile, registry: &CategoryRegistry) -> Vec<ClusterRef> {
    let mut out = Vec::new();
    for cat in &registry.categories {
        if let Some(m) = model.category(cat.id) {
            let mut ids: Vec<u32> = m.clusters.iter().map(|c| c.id).collect();
            ids.sort_unstable();
            out.extend(ids.into_iter().map(|cluster| ClusterRef {
                category: cat.id,
                cluster,
            }));
        }
    }
    out
}

/// Onset-ordered timeline of every event the model places in a cluster.
pub fn timeline(model: &ModelFile, events: &[EventRecord]) -> Vec<TimelineEvent> {
    let mut of: HashMap<u64, ClusterRef> = HashMap::new();
    for m in &model.categories {
        for c in &m.clusters {
            for &id in &c.members {
                of.insert(
                    id,
                    ClusterRef {
                        category: m.category,
                        cluster: c.id,
                    },
                );
            }
        }
    }
    let mut t: Vec<TimelineEvent> = events
        .iter()
        .filter_map(|e| {
            of.get(&e.id).map(|&cluster| TimelineEvent {
                id: e.id,
                start_ts: e.start_ts,
                end_ts: e.end_ts,
                cluster,
            })
        })
        .collect();
    t.sort_by_key(|e| (e.start_ts, e.id));
    t
}

/// Tries every ordered pair of clusters as trigger and follower.
pub fn mine_all(
    timeline: &[TimelineEvent],
    clusters: &[ClusterRef],
    cfg: &ReportConfig,
) -> Result<Vec<SequenceReport>> {
    let mut out = Vec::new();
    for &trigger in clusters {
        for &follower in clusters {
            if trigger == follower {
                continue;
            }
            let rule = SequenceRule {
                trigger,
                follower,
                max_gap_s: cfg.sequence_gap_s,
                min_count: cfg.sequence_min_count,
            };
            let matches = mine_sequences(timeline, &rule)?;
            if !matches.is_empty() {
                out.push(SequenceReport { rule, matches });
            }
        }
    }
    Ok(out)
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the cluster statistics, the two scatter tables, the sequence report
/// and the category summary into `out`.
pub fn export_reports(
    model: &ModelFile,
    events: &[EventRecord],
    registry: &CategoryRegistry,
    duration_s: f64,
    cfg: &ReportConfig,
    out: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let by_id: HashMap<u64, &EventRecord> = events.iter().map(|e| (e.id, e)).collect();
    let numbers = cluster_numbers(model, registry);
    let days = duration_s / 86_400.0;

    let mut stats = Vec::new();
    let mut features_of: Vec<Vec<EventFeatures>> = Vec::new();
    for (k, r) in numbers.iter().enumerate() {
        let m = model.category(r.category).expect("numbered from the model");
        let c = m.cluster(r.cluster).expect("numbered from the model");
        let members: Vec<&EventRecord> = c
            .members
            .iter()
            .filter_map(|id| by_id.get(id).copied())
            .collect();
        let feats: Vec<EventFeatures> = members
            .par_iter()
            .filter_map(|e| extract_event_features(e, &cfg.features).ok())
            .collect();
        let col = |f: fn(&EventFeatures) -> f64| Stat::of(&feats.iter().map(f).collect::<Vec<_>>());
        stats.push(ClusterStats {
            number: k + 1,
            category: r.category,
            category_name: category_name(r.category),
            cluster: r.cluster,
            count: c.members.len(),
            rate_per_day: if days > 0.0 {
                c.members.len() as f64 / days
            } else {
                0.0
            },
            representative: c.representative,
            skipped: members.len() - feats.len(),
            delta_iss_a: col(|f| f.delta_iss_mean),
            inr_a: col(|f| f.inr),
            transient_len: col(|f| f.transient_len as f64),
            overshoot_len: col(|f| f.overshoot_len as f64),
        });
        features_of.push(feats);
    }
    write_json(&out.join(CLUSTERS_NAME), &stats)?;

    let empty = Vec::new();
    let first = features_of.first().unwrap_or(&empty);
    write_csv(
        &out.join(SCATTER1_NAME),
        &["event_id", "delta_iss_A", "inr_A"],
        first.iter().map(|f| {
            vec![
                f.event_id.to_string(),
                f.delta_iss_mean.to_string(),
                f.inr.to_string(),
            ]
        }),
    )?;
    let second = features_of.get(1).unwrap_or(&empty);
    write_csv(
        &out.join(SCATTER2_NAME),
        &["event_id", "delta_iss_A", "transient_len_samples"],
        second.iter().map(|f| {
            vec![
                f.event_id.to_string(),
                f.delta_iss_mean.to_string(),
                f.transient_len.to_string(),
            ]
        }),
    )?;

    let tl = timeline(model, events);
    write_json(&out.join(SEQUENCES_NAME), &mine_all(&tl, &numbers, cfg)?)?;

    let categories = registry
        .categories
        .iter()
        .map(|c| SummaryRow {
            category: c.id,
            name: category_name(c.id),
            key: c.key.label(),
            vectors: c.members.iter().map(|v| v.to_string()).collect(),
            events: events.iter().filter(|e| e.category == c.id).count(),
            clusters: model.category(c.id).map_or(0, |m| m.clusters.len()),
        })
        .collect();
    let summary = Summary {
        duration_s,
        events: events.len(),
        categories,
        clusters: numbers.len(),
    };
    write_json(&out.join(SUMMARY_NAME), &summary)
}
