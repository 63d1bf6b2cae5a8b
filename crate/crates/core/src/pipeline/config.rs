use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterParams;
use crate::error::{Error, Result};
use crate::events::MergeConfig;
use crate::gan::DetectorConfig;
use crate::ingest::csv::CsvSchema;
use crate::report::ReportConfig;
use crate::similarity::{MccConfig, RowFilter, EPS_VAR};
use crate::synth::{SuperEventConfig, SynthConfig};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Root for every stage artifact.
    pub work_dir: PathBuf,
    /// Input stream; the synthetic stream under `work_dir` when unset.
    pub data: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            work_dir: PathBuf::from("gridsift-work"),
            data: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub enabled: bool,
    pub minutes: f64,
    pub event_rate: f64,
    pub super_event: bool,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            enabled: true,
            minutes: 480.0,
            event_rate: 4e-4,
            super_event: true,
        }
    }
}

impl SynthParams {
    pub fn synth_config(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            seed,
            duration_s: self.minutes * 60.0,
            event_rate: self.event_rate,
            super_event: self.super_event.then(SuperEventConfig::default),
            ..SynthConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestParams {
    pub schema: CsvSchema,
    pub overlap: usize,
    /// Timestamp gaps above this many sample periods split the stream.
    pub max_gap_periods: f64,
}

impl Default for IngestParams {
    fn default() -> Self {
        Self {
            schema: CsvSchema::default(),
            overlap: 20,
            max_gap_periods: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    /// Leading part of the stream used for normalization and training.
    pub minutes: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self { minutes: 60.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityParams {
    pub eps_var: f64,
    pub rows: RowFilter,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        Self {
            eps_var: EPS_VAR,
            rows: RowFilter::default(),
        }
    }
}

impl SimilarityParams {
    pub fn mcc_config(&self, scale: [f64; 9]) -> MccConfig {
        MccConfig {
            eps_var: self.eps_var,
            rows: self.rows,
            scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayParams {
    /// Events starting in this leading part of the stream form the initial
    /// clustering; later events are assigned actively.
    pub fit_minutes: f64,
}

impl Default for ReplayParams {
    fn default() -> Self {
        Self { fit_minutes: 360.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    pub seed: u64,
    /// Worker threads; 0 uses every core, 1 is fully deterministic.
    pub threads: usize,
    pub paths: Paths,
    pub synth: SynthParams,
    pub ingest: IngestParams,
    pub train: TrainParams,
    pub detector: DetectorConfig,
    pub events: MergeConfig,
    pub similarity: SimilarityParams,
    pub cluster: ClusterParams,
    pub replay: ReplayParams,
    pub report: ReportConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 7,
            threads: 0,
            paths: Paths::default(),
            synth: SynthParams::default(),
            ingest: IngestParams::default(),
            train: TrainParams::default(),
            detector: DetectorConfig::default(),
            events: MergeConfig::default(),
            similarity: SimilarityParams::default(),
            cluster: ClusterParams::default(),
            replay: ReplayParams::default(),
            report: ReportConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every range violation, named individually.
    pub fn validate(&self) -> Result<()> {
        let mut bad: Vec<String> = Vec::new();
        if self.version != CONFIG_VERSION {
            bad.push(format!(
                "version = {} (expected {CONFIG_VERSION})",
                self.version
            ));
        }
        let d = &self.detector;
        if !(d.z_p > 0.0) {
            bad.push(format!("detector.z_p = {} must be positive", d.z_p));
        }
        if self.ingest.overlap >= d.window_len {
            bad.push(format!(
                "ingest.overlap = {} must be below detector.window_len = {}",
                self.ingest.overlap, d.window_len
            ));
        }
        if let Err(e) = d.validate() {
            bad.push(format!("detector: {e}"));
        }
        if let Err(Error::Config(m)) = self.cluster.validate() {
            bad.push(format!("cluster: {m}"));
        }
        if !(self.train.minutes > 0.0) {
            bad.push(format!(
                "train.minutes = {} must be positive",
                self.train.minutes
            ));
        }
        if !(self.replay.fit_minutes > 0.0) {
            bad.push(format!(
                "replay.fit_minutes = {} must be positive",
                self.replay.fit_minutes
            ));
        }
        if !(self.similarity.eps_var >= 0.0) {
            bad.push(format!(
                "similarity.eps_var = {} must be non-negative",
                self.similarity.eps_var
            ));
        }
        if !(self.report.sequence_gap_s > 0.0) || self.report.sequence_min_count == 0 {
            bad.push("report sequence gap and count must be positive".into());
        }
        if self.synth.enabled {
            if let Err(e) = self.synth.synth_config(self.seed).validate() {
                bad.push(format!("synth: {e}"));
            }
        } else if self.paths.data.is_none() {
            bad.push("paths.data is required when synth.enabled = false".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }
}

/// Reads, fills defaults and range-checks a config file.
pub fn validate_config(path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    PipelineConfig::from_toml(&text)
}
