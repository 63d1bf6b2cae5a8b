//! Labeled synthetic micro-PMU streams.
//!
//! A stream is a noisy, slowly drifting three-phase steady state with events
//! from the archetype catalog added on top. Generation is a pure function of
//! the config: the baseline, the noise of every segment, the event plan and
//! the super-event plan each draw from their own seeded ChaCha stream, so the
//! output does not depend on thread count and removing the events leaves the
//! counterfactual normal stream sample-for-sample.

pub mod archetype;
pub mod baseline;

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use archetype::{
    archetype_catalog, EventInstance, Recurrence, Scales, SignatureSpec, ARCHETYPE_COUNT,
};
pub use baseline::{BaselineConfig, Drift};

use crate::error::{Error, Result};
use crate::ingest::csv::{write_csv, CsvSchema};
use crate::ingest::{RawFrame, FEATURE_COUNT};
use baseline::DriftPhases;

pub const LABELS_VERSION: u32 = 1;
pub const WEEK_S: f64 = 7.0 * 86_400.0;

/// Samples per independently seeded noise segment.
const SEGMENT: usize = 1 << 15;

const STREAM_DRIFT: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_PLAN: u64 = 3;
const STREAM_SUPER: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuperEventConfig {
    /// Onset of the first trigger, seconds from stream start.
    pub start_s: f64,
    pub trigger: u8,
    pub follower: u8,
    /// Delay from trigger onset to the first follower.
    pub gap_s: f64,
    pub count: usize,
    pub spacing_s: f64,
    /// Follower gain ramps linearly between these.
    pub gain_from: f64,
    pub gain_to: f64,
    pub weekly: bool,
}

impl Default for SuperEventConfig {
    fn default() -> Self {
        Self {
            start_s: 600.0,
            trigger: 6,
            follower: 10,
            gap_s: 60.0,
            count: 100,
            spacing_s: 2.0,
            gain_from: 0.6,
            gain_to: 1.6,
            weekly: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub duration_s: f64,
    pub sample_rate: f64,
    /// Timestamp of the first frame, microseconds since epoch.
    pub start_us: i64,
    /// Probability that an event starts at any given sample.
    pub event_rate: f64,
    /// Archetypes drawn for random placement, in near-equal numbers.
    pub archetypes: Vec<u8>,
    /// Minimum quiet samples between consecutive events.
    pub quiet_gap: usize,
    /// Time for a steady-state offset to relax back to the baseline.
    pub relax_s: f64,
    pub baseline: BaselineConfig,
    pub super_event: Option<SuperEventConfig>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            duration_s: 8.0 * 3600.0,
            sample_rate: 120.0,
            start_us: 1_600_000_000_000_000,
            event_rate: 4e-4,
            archetypes: (1..=ARCHETYPE_COUNT).collect(),
            quiet_gap: 200,
            relax_s: 90.0,
            baseline: BaselineConfig::default(),
            super_event: None,
        }
    }
}

impl SynthConfig {
    pub fn samples(&self) -> usize {
        (self.duration_s * self.sample_rate).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0) {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        if self.duration_s < 600.0 {
            return Err(Error::Config(format!(
                "duration {} s is shorter than 10 minutes",
                self.duration_s
            )));
        }
        if !(0.0..1.0).contains(&self.event_rate) {
            return Err(Error::Config(format!(
                "event_rate {} outside [0, 1)",
                self.event_rate
            )));
        }
        if self.event_rate > 0.0 && self.archetypes.is_empty() {
            return Err(Error::Config(
                "event_rate > 0 needs at least one archetype".into(),
            ));
        }
        if let Some(a) = self
            .archetypes
            .iter()
            .find(|a| !(1..=ARCHETYPE_COUNT).contains(a))
        {
            return Err(Error::Config(format!("unknown archetype {a}")));
        }
        if let Some(s) = &self.super_event {
            for a in [s.trigger, s.follower] {
                if !(1..=ARCHETYPE_COUNT).contains(&a) {
                    return Err(Error::Config(format!("unknown super-event archetype {a}")));
                }
            }
            if !(s.spacing_s > 0.0 && s.gap_s >= 0.0 && s.start_s >= 0.0) {
                return Err(Error::Config(
                    "super-event times must be non-negative with positive spacing".into(),
                ));
            }
        }
        if !(self.relax_s > 0.0) {
            return Err(Error::Config("relax_s must be positive".into()));
        }
        self.baseline.validate()
    }

    pub fn scales(&self) -> Scales {
        Scales {
            v_nominal: self.baseline.v_nominal,
            i_scale: self.baseline.i_mean() / 40.0,
            sample_rate: self.sample_rate,
        }
    }

    pub fn timestamp(&self, sample: usize) -> i64 {
        self.start_us + (sample as f64 * 1e6 / self.sample_rate).round() as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Single,
    Trigger,
    Follower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthLabel {
    pub id: u32,
    /// Sample index of onset, inclusive.
    pub start: usize,
    /// Sample index one past the labeled span.
    pub end: usize,
    pub start_ts: i64,
    pub end_ts: i64,
    pub archetype: u8,
    pub role: Role,
    /// Index of the super-event sequence this label belongs to.
    pub sequence: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedEvent {
    pub label: GroundTruthLabel,
    pub instance: EventInstance,
}

#[derive(Debug, Clone)]
pub struct SynthStream {
    pub frames: Vec<RawFrame>,
    pub events: Vec<PlannedEvent>,
}

impl SynthStream {
    pub fn labels(&self) -> Vec<GroundTruthLabel> {
        self.events.iter().map(|e| e.label).collect()
    }
}

/// Labels file written next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelsFile {
    pub version: u32,
    pub config: SynthConfig,
    pub events: Vec<PlannedEvent>,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Onsets of every super-event occurrence that fits in the stream.
fn super_event_starts(cfg: &SynthConfig, s: &SuperEventConfig) -> Vec<f64> {
    let span = s.gap_s + s.spacing_s * s.count as f64 + 10.0;
    let mut starts = Vec::new();
    let mut t = s.start_s;
    while t + span <= cfg.duration_s {
        starts.push(t);
        if !s.weekly {
            break;
        }
        t += WEEK_S;
    }
    starts
}

/// Super-event instances relative to the trigger onset, in samples. Every
/// weekly occurrence reuses the same draw. Followers repeat one drawn shape
/// (the same device operating again) with the gain ramp on top.
pub fn generate_super_event(
    cfg: &SynthConfig,
    s: &SuperEventConfig,
) -> Vec<(usize, EventInstance, Role)> {
    let mut rng = rng_for(cfg.seed, STREAM_SUPER);
    let mut seq = vec![(0, EventInstance::draw(s.trigger, &mut rng), Role::Trigger)];
    let shape = EventInstance::draw(s.follower, &mut rng);
    for k in 0..s.count {
        let mut inst = shape;
        let frac = if s.count > 1 {
            k as f64 / (s.count - 1) as f64
        } else {
            0.0
        };
        inst.gain = s.gain_from + (s.gain_to - s.gain_from) * frac;
        let offset = ((s.gap_s + s.spacing_s * k as f64) * cfg.sample_rate).round() as usize;
        seq.push((offset, inst, Role::Follower));
    }
    seq
}

/// Event schedule for a whole stream (no samples rendered). Works for
/// durations far longer than what is practical to render.
pub fn plan_events(cfg: &SynthConfig) -> Result<Vec<PlannedEvent>> {
    cfg.validate()?;
    let n = cfg.samples();
    // start -> end (exclusive) of occupied spans, trailing quiet gap included.
    let mut occupied: BTreeMap<usize, usize> = BTreeMap::new();
    let mut planned: Vec<(usize, EventInstance, Role, Option<u32>)> = Vec::new();

    if let Some(s) = &cfg.super_event {
        let seq = generate_super_event(cfg, s);
        for (k, t0) in super_event_starts(cfg, s).into_iter().enumerate() {
            let base = (t0 * cfg.sample_rate).round() as usize;
            let end = seq
                .iter()
                .map(|(o, inst, _)| base + o + inst.len)
                .max()
                .unwrap_or(base);
            occupied.insert(base, end + cfg.quiet_gap);
            for &(o, inst, role) in &seq {
                planned.push((base + o, inst, role, Some(k as u32)));
            }
        }
    }

    let count = (cfg.event_rate * n as f64).round() as usize;
    if count > 0 {
        let mut rng = rng_for(cfg.seed, STREAM_PLAN);
        let mut kinds: Vec<u8> = (0..count)
            .map(|k| cfg.archetypes[k % cfg.archetypes.len()])
            .collect();
        kinds.shuffle(&mut rng);
        let lo = cfg.quiet_gap;
        for archetype in kinds {
            let inst = EventInstance::draw(archetype, &mut rng);
            let need = inst.len + cfg.quiet_gap;
            if n < lo + need {
                return Err(Error::InvalidArgument(
                    "stream too short for the requested events".into(),
                ));
            }
            let mut placed = false;
            for _ in 0..1000 {
                let start = rng.random_range(lo..=n - need);
                if is_free(&occupied, start, start + need) {
                    occupied.insert(start, start + need);
                    planned.push((start, inst, Role::Single, None));
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::InvalidArgument(format!(
                    "event rate {} too high to place {count} non-overlapping events",
                    cfg.event_rate
                )));
            }
        }
    }

    planned.sort_by_key(|p| p.0);
    Ok(planned
        .into_iter()
        .enumerate()
        .map(|(id, (start, instance, role, sequence))| PlannedEvent {
            label: GroundTruthLabel {
                id: id as u32,
                start,
                end: start + instance.len,
                start_ts: cfg.timestamp(start),
                end_ts: cfg.timestamp(start + instance.len),
                archetype: instance.archetype,
                role,
                sequence,
            },
            instance,
        })
        .collect())
}

fn is_free(occupied: &BTreeMap<usize, usize>, start: usize, end: usize) -> bool {
    if let Some((_, &e)) = occupied.range(..=start).next_back() {
        if e > start {
            return false;
        }
    }
    occupied.range(start..end).next().is_none()
}

/// Renders the frames for a plan. An empty plan gives the counterfactual
/// normal stream of the same config.
pub fn render(cfg: &SynthConfig, events: &[PlannedEvent]) -> Result<Vec<RawFrame>> {
    cfg.validate()?;
    let n = cfg.samples();
    let base = &cfg.baseline;
    let phases = DriftPhases::draw(base, &mut rng_for(cfg.seed, STREAM_DRIFT));
    let sc = cfg.scales();
    let relax = (cfg.relax_s * cfg.sample_rate).round() as usize;
    let inside: Vec<&PlannedEvent> = events.iter().filter(|e| e.label.start < n).collect();
    let steady: Vec<[f64; FEATURE_COUNT]> = inside.iter().map(|e| e.instance.steady(&sc)).collect();

    let segments: Vec<usize> = (0..n.div_ceil(SEGMENT)).collect();
    let chunks: Vec<Vec<RawFrame>> = segments
        .par_iter()
        .map(|&seg| {
            let lo = seg * SEGMENT;
            let hi = (lo + SEGMENT).min(n);
            let mut rng = rng_for(
                cfg.seed ^ (seg as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
                STREAM_NOISE,
            );
            let mut deltas = vec![[0.0; FEATURE_COUNT]; hi - lo];
            for (e, ss) in inside.iter().zip(&steady) {
                let (start, end) = (e.label.start, e.label.end);
                if start >= hi || end + relax <= lo {
                    continue;
                }
                for k in start.max(lo)..(end + relax).min(hi) {
                    let d = if k < end {
                        e.instance.delta(k - start, &sc)
                    } else {
                        let x = (k - end) as f64 / relax as f64;
                        let r = 0.5 + 0.5 * (std::f64::consts::PI * x).cos();
                        ss.map(|v| v * r)
                    };
                    for (acc, v) in deltas[k - lo].iter_mut().zip(d) {
                        *acc += v;
                    }
                }
            }
            (lo..hi)
                .zip(deltas)
                .map(|(k, d)| {
                    let t = k as f64 / cfg.sample_rate;
                    let level = phases.level(base, t);
                    let rotation = TAU * base.freq_offset_hz * t;
                    let mut frame = RawFrame {
                        timestamp: cfg.timestamp(k),
                        v_mag: [0.0; 3],
                        v_ang: [0.0; 3],
                        i_mag: [0.0; 3],
                        i_ang: [0.0; 3],
                    };
                    for p in 0..3 {
                        let mut noise = || -> f64 { rng.sample(StandardNormal) };
                        let v = level[0][p] * (1.0 + base.noise_rel * noise()) + d[p];
                        let i = level[1][p] * (1.0 + base.noise_rel * noise()) + d[3 + p];
                        let pf =
                            level[2][p] + base.pf_nominal * base.noise_rel * noise() + d[6 + p];
                        let pf = pf.clamp(0.05, 1.0);
                        let va = wrap(rotation - TAU * p as f64 / 3.0);
                        frame.v_mag[p] = v.max(0.0);
                        frame.i_mag[p] = i.max(0.0);
                        frame.v_ang[p] = va;
                        frame.i_ang[p] = wrap(va - pf.acos());
                    }
                    frame
                })
                .collect()
        })
        .collect();
    Ok(chunks.concat())
}

fn wrap(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > std::f64::consts::PI {
        w - TAU
    } else {
        w
    }
}

pub fn generate_stream(cfg: &SynthConfig) -> Result<SynthStream> {
    let events = plan_events(cfg)?;
    let frames = render(cfg, &events)?;
    Ok(SynthStream { frames, events })
}

pub const CSV_NAME: &str = "stream.csv";
pub const LABELS_NAME: &str = "labels.json";

/// Writes `stream.csv` (ingest's default schema) and `labels.json` into `dir`.
pub fn write_stream(dir: &Path, cfg: &SynthConfig, stream: &SynthStream) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_csv(&dir.join(CSV_NAME), &stream.frames, &CsvSchema::default())?;
    write_labels(&dir.join(LABELS_NAME), cfg, &stream.events)
}

pub fn write_labels(path: &Path, cfg: &SynthConfig, events: &[PlannedEvent]) -> Result<()> {
    let file = LabelsFile {
        version: LABELS_VERSION,
        config: cfg.clone(),
        events: events.to_vec(),
    };
    let text = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: &Path) -> Result<LabelsFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: LabelsFile = serde_json::from_str(&text)?;
    if file.version != LABELS_VERSION {
        return Err(Error::Version {
            found: file.version,
            expected: LABELS_VERSION,
        });
    }
    Ok(file)
}
