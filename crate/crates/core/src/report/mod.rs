//! Per-event current features, cluster statistics, sequence mining and the
//! plot-ready exports.

pub mod export;
pub mod features;
pub mod sequence;

pub use export::{
    cluster_numbers, export_reports, mine_all, timeline, ClusterStats, ReportConfig,
    SequenceReport, Stat, Summary, SummaryRow, CLUSTERS_NAME, SCATTER1_NAME, SCATTER2_NAME,
    SEQUENCES_NAME, SUMMARY_NAME,
};
pub use features::{extract_event_features, EventFeatures, FeatureConfig};
pub use sequence::{
    mine_sequences, mine_sequences_brute, ClusterRef, SequenceMatch, SequenceRule, TimelineEvent,
};
