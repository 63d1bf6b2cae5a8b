use std::collections::{BTreeMap, HashMap};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{IngestParams, PipelineConfig, SimilarityParams};
use crate::cluster::{
    fit_category, reoptimize, ClusterModel, ClusterParams, ModelFile, PoolEvent, MODEL_VERSION,
};
use crate::error::{Error, Result};
use crate::events::store::write_json;
use crate::events::{
    event_rate_report, extract_events, flag_windows, EventRateReport, EventRecord, EventStore,
    MergeConfig,
};
use crate::gan::io::{load_bank, model_path, save_bank};
use crate::gan::{DetectorBank, DetectorConfig};
use crate::ingest::csv::parse_csv;
use crate::ingest::{
    derive_all, fit_norm_stats, split_segments, windowize_segments, FeatureFrame, NormStats,
    FEATURE_COUNT,
};
use crate::report::{export_reports, ReportConfig, SUMMARY_NAME};
use crate::similarity::{scale_from_std, Correlator, EventMatrix, MccConfig, SimilarityCache};
use crate::synth::{generate_stream, write_stream, SynthConfig, CSV_NAME, LABELS_NAME};

/// Precision of the detector networks.
pub type DetectorScalar = f32;

pub const NORM_NAME: &str = "norm.json";
pub const TRAIN_NAME: &str = "train.json";
pub const DETECT_NAME: &str = "detect.json";
pub const MODEL_NAME: &str = "model.json";
pub const REPLAY_LOG_NAME: &str = "assignments.json";

/// Windows scored per detection chunk, bounding peak memory.
pub const DETECT_CHUNK: usize = 16_384;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Synth,
    Train,
    Detect,
    Cluster,
    Replay,
    Report,
}

pub const EXIT_CONFIG: i32 = 2;

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Synth,
        Stage::Train,
        Stage::Detect,
        Stage::Cluster,
        Stage::Replay,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Train => "train",
            Stage::Detect => "detect",
            Stage::Cluster => "cluster",
            Stage::Replay => "replay",
            Stage::Report => "report",
        }
    }

    pub fn exit_code(self) -> i32 {
        10 + Stage::ALL.iter().position(|&s| s == self).expect("listed") as i32
    }

    pub fn from_name(name: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| s.name() == name)
    }
}

/// Process exit status for an error returned by [`run_pipeline`] or a stage.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Stage { stage, .. } => Stage::from_name(stage).map_or(1, Stage::exit_code),
        Error::Config(_) => EXIT_CONFIG,
        _ => 1,
    }
}

fn stage_err(stage: Stage, artifact: &Path) -> impl FnOnce(Error) -> Error + '_ {
    move |e| Error::Stage {
        stage: stage.name(),
        artifact: artifact.to_path_buf(),
        source: Box::new(e),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn read_json<D: serde::de::DeserializeOwned>(path: &Path) -> Result<D> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Artifact locations under the work directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub root: PathBuf,
    pub data: Option<PathBuf>,
}

impl Layout {
    pub fn new(cfg: &PipelineConfig) -> Self {
        Self {
            root: cfg.paths.work_dir.clone(),
            data: cfg.paths.data.clone(),
        }
    }

    pub fn synth_dir(&self) -> PathBuf {
        self.root.join("synth")
    }
    pub fn data(&self) -> PathBuf {
        self.data
            .clone()
            .unwrap_or_else(|| self.synth_dir().join(CSV_NAME))
    }
    pub fn labels(&self) -> PathBuf {
        self.synth_dir().join(LABELS_NAME)
    }
    pub fn models_dir(&self) -> PathBuf {
        self.root.join("models")
    }
    pub fn events_dir(&self) -> PathBuf {
        self.root.join("events")
    }
    pub fn cluster_dir(&self) -> PathBuf {
        self.root.join("clusters")
    }
    pub fn cluster_model(&self) -> PathBuf {
        self.cluster_dir().join(MODEL_NAME)
    }
    pub fn sim_cache(&self) -> PathBuf {
        self.cluster_dir().join("similarity")
    }
    pub fn replay_dir(&self) -> PathBuf {
        self.root.join("replay")
    }
    pub fn replay_model(&self) -> PathBuf {
        self.replay_dir().join(MODEL_NAME)
    }
    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    /// The artifact whose presence marks a stage as complete; each stage
    /// writes it last.
    pub fn marker(&self, stage: Stage) -> PathBuf {
        match stage {
            Stage::Synth => self.labels(),
            Stage::Train => self.models_dir().join(TRAIN_NAME),
            Stage::Detect => self.events_dir().join(DETECT_NAME),
            Stage::Cluster => self.cluster_model(),
            Stage::Replay => self.replay_model(),
            Stage::Report => self.reports_dir().join(SUMMARY_NAME),
        }
    }

    pub fn is_done(&self, stage: Stage) -> bool {
        self.marker(stage).exists()
    }
}

/// A feature stream with its contiguous segments.
#[derive(Debug, Clone)]
pub struct LoadedStream {
    pub frames: Vec<FeatureFrame>,
    pub segments: Vec<Range<usize>>,
    pub rows: usize,
    pub skipped: usize,
}

pub fn load_stream(path: &Path, ingest: &IngestParams) -> Result<LoadedStream> {
    let parsed = parse_csv(path, &ingest.schema)?;
    let frames = derive_all(&parsed.frames)?;
    drop(parsed.frames);
    let segments = split_segments(&frames, ingest.schema.sample_rate, ingest.max_gap_periods);
    Ok(LoadedStream {
        frames,
        segments,
        rows: parsed.rows,
        skipped: parsed.skipped,
    })
}

pub fn stream_name(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| "stream".into(), |n| n.to_string_lossy().into_owned())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub samples: usize,
    pub events: usize,
}

pub fn run_synth(cfg: &SynthConfig, out: &Path) -> Result<SynthSummary> {
    let stream = generate_stream(cfg)?;
    write_stream(out, cfg, &stream)?;
    Ok(SynthSummary {
        samples: stream.frames.len(),
        events: stream.events.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub stream: String,
    pub frames: usize,
    pub windows: usize,
    pub epochs: usize,
    pub seed: u64,
    pub pdf_mean: [f64; FEATURE_COUNT],
    pub pdf_std: [f64; FEATURE_COUNT],
}

/// Segments clipped to the frames before `end`.
fn clip_segments(segments: &[Range<usize>], end: usize) -> Vec<Range<usize>> {
    segments
        .iter()
        .filter(|s| s.start < end)
        .map(|s| s.start..s.end.min(end))
        .collect()
}

/// Fits normalization and the nine detectors on the leading `minutes` of
/// the stream. Writes the models, `norm.json` and finally `train.json`.
pub fn run_train(
    data: &Path,
    ingest: &IngestParams,
    detector: &DetectorConfig,
    minutes: f64,
    seed: u64,
    out: &Path,
) -> Result<TrainSummary> {
    let s = load_stream(data, ingest)?;
    let t0 = s
        .frames
        .first()
        .map(|f| f.timestamp)
        .ok_or_else(|| Error::InsufficientData("empty stream".into()))?;
    let limit = t0 + (minutes * 60e6).round() as i64;
    let end = s.frames.partition_point(|f| f.timestamp < limit);
    let train = &s.frames[..end];
    let stats = fit_norm_stats(train)?;
    let windows = windowize_segments(
        &s.frames,
        &clip_segments(&s.segments, end),
        &stats,
        detector.window_len,
        ingest.overlap,
    )?
    .windows;
    log::info!("train: {} frames, {} windows", end, windows.len());
    let bank = DetectorBank::<DetectorScalar>::train(&windows, detector, seed)?;
    ensure_dir(out)?;
    save_bank(out, &bank)?;
    write_json(&out.join(NORM_NAME), &stats)?;
    let summary = TrainSummary {
        stream: stream_name(data),
        frames: end,
        windows: windows.len(),
        epochs: detector.epochs,
        seed,
        pdf_mean: std::array::from_fn(|f| bank.detectors[f].pdf.mean),
        pdf_std: std::array::from_fn(|f| bank.detectors[f].pdf.std),
    };
    write_json(&out.join(TRAIN_NAME), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectSummary {
    pub stream: String,
    pub first_ts: i64,
    pub last_ts: i64,
    pub sample_rate: f64,
    pub duration_s: f64,
    pub windows: usize,
    pub flagged_windows: usize,
    /// Flagged-window count per feature.
    pub flagged_per_feature: [usize; FEATURE_COUNT],
    pub rate: EventRateReport,
}

/// Windows of `seg` starting at `stride` multiples, in chunks of at most
/// `chunk` windows.
fn chunk_ranges(seg: &Range<usize>, len: usize, stride: usize, chunk: usize) -> Vec<Range<usize>> {
    if seg.len() < len {
        return Vec::new();
    }
    let count = (seg.len() - len) / stride + 1;
    (0..count.div_ceil(chunk))
        .map(|c| {
            let first = seg.start + c * chunk * stride;
            let last = seg.start + ((c + 1) * chunk).min(count).saturating_sub(1) * stride;
            first..last + len
        })
        .collect()
}

/// Scores every window of the stream, merges flagged windows into events
/// and writes a fresh event store plus `norm.json` and `detect.json`.
pub fn run_detect(
    data: &Path,
    ingest: &IngestParams,
    models: &Path,
    merge: MergeConfig,
    out: &Path,
) -> Result<DetectSummary> {
    let bank = load_bank::<DetectorScalar>(models, None)?;
    let stats: NormStats = read_json(&models.join(NORM_NAME))?;
    let len = bank.detectors[0].model.arch.window_len;
    if ingest.overlap >= len {
        return Err(Error::Config(format!(
            "ingest.overlap = {} must be below window_len = {len}",
            ingest.overlap
        )));
    }
    let stride = len - ingest.overlap;
    let s = load_stream(data, ingest)?;
    let (first_ts, last_ts) = match (s.frames.first(), s.frames.last()) {
        (Some(a), Some(b)) => (a.timestamp, b.timestamp),
        _ => return Err(Error::InsufficientData("empty stream".into())),
    };

    let mut flagged = Vec::new();
    let mut windows = 0;
    let mut per_feature = [0usize; FEATURE_COUNT];
    for seg in &s.segments {
        for r in chunk_ranges(seg, len, stride, DETECT_CHUNK) {
            let mut w = windowize_segments(&s.frames, &[r], &stats, len, ingest.overlap)?.windows;
            for x in &mut w {
                x.index += windows;
            }
            windows += w.len();
            let scores = bank.score_windows(&w)?;
            for sc in &scores {
                for (f, &b) in sc.flags.iter().enumerate() {
                    per_feature[f] += usize::from(b);
                }
            }
            flagged.extend(
                flag_windows(&w, &scores)?
                    .into_iter()
                    .filter(|f| f.vector.any()),
            );
        }
    }
    let store = EventStore::new(out);
    store.clear()?;
    let mut registry = store.load_registry()?;
    let events = extract_events(
        &flagged,
        &s.frames,
        merge,
        &stream_name(data),
        1,
        &mut registry,
    )?;
    store.append(&events)?;
    store.save_registry(&registry)?;
    write_json(&out.join(NORM_NAME), &stats)?;
    let summary = DetectSummary {
        stream: stream_name(data),
        first_ts,
        last_ts,
        sample_rate: ingest.schema.sample_rate,
        duration_s: s.frames.len() as f64 / ingest.schema.sample_rate,
        windows,
        flagged_windows: flagged.len(),
        flagged_per_feature: per_feature,
        rate: event_rate_report(
            s.frames.len(),
            ingest.schema.sample_rate,
            &events,
            &registry,
        ),
    };
    write_json(&out.join(DETECT_NAME), &summary)?;
    Ok(summary)
}

/// Loaded event store with the normalization scale used by MCC.
pub struct EventSet {
    pub events: Vec<EventRecord>,
    pub registry: crate::events::CategoryRegistry,
    pub detect: DetectSummary,
    pub norm: NormStats,
}

pub fn load_event_set(dir: &Path) -> Result<EventSet> {
    let store = EventStore::new(dir);
    let mut events = store.load()?;
    events.sort_by_key(|e| (e.start_ts, e.id));
    Ok(EventSet {
        events,
        registry: store.load_registry()?,
        detect: read_json(&dir.join(DETECT_NAME))?,
        norm: read_json(&dir.join(NORM_NAME))?,
    })
}

fn pool_event(e: &EventRecord) -> Result<PoolEvent<f64>> {
    Ok(PoolEvent {
        id: e.id,
        ts: e.start_ts,
        m: EventMatrix::from_record(e)?,
    })
}

/// Onset cutoff separating the initial fit from the replayed events.
pub fn fit_cutoff(detect: &DetectSummary, fit_minutes: f64) -> i64 {
    detect.first_ts + (fit_minutes * 60e6).round() as i64
}

/// Full solve per category on events starting before the cutoff.
pub fn run_cluster(
    events_dir: &Path,
    similarity: &SimilarityParams,
    params: &ClusterParams,
    fit_minutes: f64,
    out: &Path,
    cache: Option<&Path>,
) -> Result<ModelFile> {
    params.validate()?;
    let set = load_event_set(events_dir)?;
    let cutoff = fit_cutoff(&set.detect, fit_minutes);
    let mcc = similarity.mcc_config(scale_from_std(&set.norm.std));
    let cache = cache.map(SimilarityCache::new);
    let mut by_cat: BTreeMap<u32, Vec<PoolEvent<f64>>> = BTreeMap::new();
    for e in set.events.iter().filter(|e| e.start_ts < cutoff) {
        by_cat.entry(e.category).or_default().push(pool_event(e)?);
    }
    let mut categories = Vec::new();
    for (cat, pool) in &by_cat {
        let t = Instant::now();
        let (model, _) = fit_category(*cat, pool, params, &mcc, cache.as_ref())?;
        log::info!(
            "cluster: category {cat} events={} clusters={} ms={}",
            pool.len(),
            model.clusters.len(),
            t.elapsed().as_millis()
        );
        categories.push(model);
    }
    let file = ModelFile {
        version: MODEL_VERSION,
        params: params.clone(),
        mcc,
        categories,
    };
    file.save(out)?;
    Ok(file)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub event: u64,
    pub category: u32,
    pub cluster: u32,
    /// Best MCC against the existing representatives, if any.
    pub mcc: Option<f64>,
    pub created: bool,
    /// A periodic re-solve ran right after this event.
    pub reoptimized: bool,
}

/// Actively assigns every event the model does not hold yet, in onset order,
/// re-solving a category whenever its trigger fires. Writes the updated
/// model and the assignment log into `out`.
pub fn run_replay(
    model_path: &Path,
    events_dir: &Path,
    out: &Path,
) -> Result<(ModelFile, Vec<ReplayEntry>)> {
    let mut file = ModelFile::load(model_path)?;
    let set = load_event_set(events_dir)?;
    let params = file.params.clone();
    let mcc: MccConfig = file.mcc;
    let known: std::collections::HashSet<u64> = file
        .categories
        .iter()
        .flat_map(|m| m.clusters.iter().flat_map(|c| c.members.iter().copied()))
        .collect();
    let mats: HashMap<u64, EventMatrix<f64>> = set
        .events
        .iter()
        .map(|e| Ok((e.id, EventMatrix::from_record(e)?)))
        .collect::<Result<_>>()?;
    let mut pools: BTreeMap<u32, Vec<PoolEvent<f64>>> = BTreeMap::new();
    for e in set.events.iter().filter(|e| known.contains(&e.id)) {
        pools.entry(e.category).or_default().push(pool_event(e)?);
    }
    let mut corr = Correlator::default();
    let mut log_entries = Vec::new();
    for e in set.events.iter().filter(|e| !known.contains(&e.id)) {
        if file.category(e.category).is_none() {
            file.categories.push(ClusterModel::empty(
                e.category,
                params.theta_active,
                e.start_ts,
            ));
            file.categories.sort_by_key(|m| m.category);
        }
        let model = file.category_mut(e.category).expect("inserted above");
        let before = model.next_id;
        let m = model.best_match(&mats[&e.id], |id| mats.get(&id).cloned(), &mcc, &mut corr)?;
        let cluster = model.apply(m, e.id, e.start_ts);
        let pool = pools.entry(e.category).or_default();
        pool.push(pool_event(e)?);
        let mut entry = ReplayEntry {
            event: e.id,
            category: e.category,
            cluster,
            mcc: m.best.map(|(_, v)| v),
            created: model.next_id != before,
            reoptimized: false,
        };
        if model.reoptimize_due(&params, e.start_ts) {
            *model = reoptimize(model, pool, &params, &mcc, e.start_ts)?;
            entry.reoptimized = true;
        }
        log_entries.push(entry);
    }
    ensure_dir(out)?;
    write_json(&out.join(REPLAY_LOG_NAME), &log_entries)?;
    file.save(&out.join(MODEL_NAME))?;
    Ok((file, log_entries))
}

pub fn run_report(
    model_path: &Path,
    events_dir: &Path,
    cfg: &ReportConfig,
    out: &Path,
) -> Result<()> {
    let model = ModelFile::load(model_path)?;
    let set = load_event_set(events_dir)?;
    export_reports(
        &model,
        &set.events,
        &set.registry,
        set.detect.duration_s,
        cfg,
        out,
    )
}

/// Worker threads: `GRIDSIFT_THREADS` wins over the config value; 0 means
/// one per core.
pub fn effective_threads(configured: usize) -> usize {
    std::env::var("GRIDSIFT_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(configured)
}

pub fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    log::info!("threads={threads}");
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub ran: Vec<Stage>,
    pub skipped: Vec<Stage>,
}

/// Runs every stage in order, skipping stages whose marker artifact exists
/// unless `force` is set.
pub fn run_pipeline(cfg: &PipelineConfig, force: bool) -> Result<PipelineRun> {
    cfg.validate()?;
    let pool = thread_pool(effective_threads(cfg.threads))?;
    pool.install(|| run_stages(cfg, force))
}

fn run_stages(cfg: &PipelineConfig, force: bool) -> Result<PipelineRun> {
    let lay = Layout::new(cfg);
    let mut run = PipelineRun::default();
    for stage in Stage::ALL {
        if stage == Stage::Synth && !cfg.synth.enabled {
            continue;
        }
        let marker = lay.marker(stage);
        if !force && marker.exists() {
            log::info!(
                "stage={} status=skipped artifact={}",
                stage.name(),
                marker.display()
            );
            run.skipped.push(stage);
            continue;
        }
        let t = Instant::now();
        log::info!("stage={} status=start", stage.name());
        let detail = run_stage(cfg, &lay, stage).map_err(stage_err(stage, &marker))?;
        log::info!(
            "stage={} status=done {detail} ms={}",
            stage.name(),
            t.elapsed().as_millis()
        );
        run.ran.push(stage);
    }
    Ok(run)
}

/// Runs one stage from the persisted artifacts of earlier stages and
/// returns a short `key=value` summary for the log.
pub fn run_stage(cfg: &PipelineConfig, lay: &Layout, stage: Stage) -> Result<String> {
    Ok(match stage {
        Stage::Synth => {
            let s = run_synth(&cfg.synth.synth_config(cfg.seed), &lay.synth_dir())?;
            format!("samples={} events={}", s.samples, s.events)
        }
        Stage::Train => {
            let s = run_train(
                &lay.data(),
                &cfg.ingest,
                &cfg.detector,
                cfg.train.minutes,
                cfg.seed,
                &lay.models_dir(),
            )?;
            format!("frames={} windows={}", s.frames, s.windows)
        }
        Stage::Detect => {
            let s = run_detect(
                &lay.data(),
                &cfg.ingest,
                &lay.models_dir(),
                cfg.events,
                &lay.events_dir(),
            )?;
            format!(
                "windows={} flagged={} events={}",
                s.windows, s.flagged_windows, s.rate.events
            )
        }
        Stage::Cluster => {
            let f = run_cluster(
                &lay.events_dir(),
                &cfg.similarity,
                &cfg.cluster,
                cfg.replay.fit_minutes,
                &lay.cluster_model(),
                Some(&lay.sim_cache()),
            )?;
            let clusters: usize = f.categories.iter().map(|m| m.clusters.len()).sum();
            format!("categories={} clusters={clusters}", f.categories.len())
        }
        Stage::Replay => {
            let (f, log) = run_replay(&lay.cluster_model(), &lay.events_dir(), &lay.replay_dir())?;
            let clusters: usize = f.categories.iter().map(|m| m.clusters.len()).sum();
            let created = log.iter().filter(|e| e.created).count();
            format!(
                "assigned={} created={created} clusters={clusters}",
                log.len()
            )
        }
        Stage::Report => {
            run_report(
                &lay.replay_model(),
                &lay.events_dir(),
                &cfg.report,
                &lay.reports_dir(),
            )?;
            format!("out={}", lay.reports_dir().display())
        }
    })
}

/// Confirms a models directory holds all nine detector files.
pub fn models_present(dir: &Path) -> bool {
    (0..FEATURE_COUNT).all(|f| model_path(dir, f).exists()) && dir.join(NORM_NAME).exists()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct() {
        let codes: Vec<i32> = Stage::ALL.iter().map(|s| s.exit_code()).collect();
        assert_eq!(codes, [10, 11, 12, 13, 14, 15]);
        let e = Error::Stage {
            stage: "detect",
            artifact: "x".into(),
            source: Box::new(Error::Untrained),
        };
        assert_eq!(exit_code(&e), 12);
        assert_eq!(exit_code(&Error::Config("bad".into())), EXIT_CONFIG);
    }

    #[test]
    fn chunks_cover_every_window_once() {
        let (len, stride) = (40, 20);
        for n in [39, 40, 59, 60, 1000, 1013] {
            let seg = 5..5 + n;
            let mut starts = Vec::new();
            for r in chunk_ranges(&seg, len, stride, 7) {
                let mut s = r.start;
                while s + len <= r.end {
                    starts.push(s);
                    s += stride;
                }
            }
            let expected: Vec<usize> = (0..)
                .map(|k| 5 + k * stride)
                .take_while(|s| s + len <= seg.end)
                .collect();
            assert_eq!(starts, expected, "n = {n}");
        }
    }

    #[test]
    fn clipping_keeps_leading_segments() {
        assert_eq!(
            clip_segments(&[0..10, 12..30, 40..50], 20),
            vec![0..10, 12..20]
        );
    }
}
