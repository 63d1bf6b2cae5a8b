//! Acceptance suite: one line per criterion.
//!
//! The corpus criteria share one resumable pipeline run under the cargo
//! target directory (override with GRIDSIFT_ACCEPTANCE_DIR); stage timings
//! of that run are kept next to it. Pass criterion numbers as arguments to
//! run a subset. Failures are printed, not hidden; the process exits
//! nonzero on any failure only when GRIDSIFT_ACCEPTANCE_STRICT is set.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use gridsift::cluster::{
    canonical, fit_category, linearization_check, objective, select_cluster_count,
    select_representatives, solve_clustering, Assignment, ClusterInstance, ClusterParams,
    ModelFile, PoolEvent, SolveMode,
};
use gridsift::events::EventRecord;
use gridsift::gan::train::{discriminator_gradients, generator_gradients};
use gridsift::gan::{Architecture, GeneratorLoss};
use gridsift::pipeline::{
    effective_threads, load_event_set, run_detect, run_stage, run_synth, thread_pool, EventSet,
    Layout, PipelineConfig, Stage,
};
use gridsift::report::{
    mine_sequences, mine_sequences_brute, ClusterRef, SequenceReport, SequenceRule, TimelineEvent,
    SEQUENCES_NAME,
};
use gridsift::similarity::{
    build_similarity_matrix, mcc, mcc_naive, AlignedPair, Correlator, EventMatrix, MccConfig,
    RowFilter,
};
use gridsift::synth::archetype::category_of;
use gridsift::synth::{read_labels, GroundTruthLabel, Role, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use common::{planted_set, Planted};

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// Lazily built default corpus shared by the corpus criteria.
struct Corpus {
    cfg: PipelineConfig,
    lay: Layout,
    timing: Timing,
    labels: Vec<GroundTruthLabel>,
    set: EventSet,
    stride: usize,
    window_len: usize,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Timing {
    /// Wall time per stage of the run that produced the artifacts.
    stage_ms: BTreeMap<String, u128>,
}

fn acceptance_root() -> PathBuf {
    std::env::var_os("GRIDSIFT_ACCEPTANCE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance"))
}

fn timing_path(work: &Path) -> PathBuf {
    let mut p = work.as_os_str().to_owned();
    p.push(".timing.json");
    PathBuf::from(p)
}

fn build_corpus() -> Result<Corpus, String> {
    let mut cfg = PipelineConfig::default();
    cfg.paths.work_dir = acceptance_root().join("corpus");
    let lay = Layout::new(&cfg);
    let tpath = timing_path(&cfg.paths.work_dir);
    let mut timing: Timing = std::fs::read(&tpath)
        .ok()
        .and_then(|b| serde_json::from_slice(&b).ok())
        .unwrap_or_default();
    let pool = thread_pool(effective_threads(cfg.threads)).map_err(|e| e.to_string())?;
    for stage in Stage::ALL {
        if lay.is_done(stage) {
            continue;
        }
        eprintln!("corpus: running {}", stage.name());
        let t = Instant::now();
        pool.install(|| run_stage(&cfg, &lay, stage))
            .map_err(|e| format!("{}: {e}", stage.name()))?;
        timing
            .stage_ms
            .insert(stage.name().into(), t.elapsed().as_millis());
        std::fs::write(
            &tpath,
            serde_json::to_vec_pretty(&timing).expect("plain struct"),
        )
        .map_err(|e| e.to_string())?;
    }
    let labels = read_labels(&lay.labels())
        .map_err(|e| e.to_string())?
        .events
        .into_iter()
        .map(|e| e.label)
        .collect();
    let set = load_event_set(&lay.events_dir()).map_err(|e| e.to_string())?;
    let window_len = cfg.detector.window_len;
    let stride = window_len - cfg.ingest.overlap;
    Ok(Corpus {
        cfg,
        lay,
        timing,
        labels,
        set,
        stride,
        window_len,
    })
}

impl Corpus {
    /// Sample span covered by an event's flagged windows.
    fn core(&self, e: &EventRecord) -> (usize, usize) {
        let lo = e.windows.iter().min().map_or(e.start, |&w| w * self.stride);
        let hi = e
            .windows
            .iter()
            .max()
            .map_or(e.end(), |&w| w * self.stride + self.window_len);
        (lo, hi)
    }

    fn overlap(a: (usize, usize), l: &GroundTruthLabel) -> usize {
        a.1.min(l.end).saturating_sub(a.0.max(l.start))
    }

    /// For each label, the event overlapping it most.
    fn best_event_per_label(&self) -> Vec<Option<&EventRecord>> {
        let mut best: Vec<Option<(usize, &EventRecord)>> = vec![None; self.labels.len()];
        for e in &self.set.events {
            let c = self.core(e);
            let lo = self.labels.partition_point(|l| l.end <= c.0);
            for (k, l) in self.labels.iter().enumerate().skip(lo) {
                if l.start >= c.1 {
                    break;
                }
                let o = Self::overlap(c, l);
                if o > 0 && best[k].is_none_or(|(b, _)| o > b) {
                    best[k] = Some((o, e));
                }
            }
        }
        best.into_iter().map(|b| b.map(|(_, e)| e)).collect()
    }

    /// Ground-truth archetype of an event: the label it overlaps most.
    fn archetype_of(&self, e: &EventRecord) -> Option<u8> {
        let c = self.core(e);
        let lo = self.labels.partition_point(|l| l.end <= c.0);
        self.labels[lo..]
            .iter()
            .take_while(|l| l.start < c.1)
            .map(|l| (Self::overlap(c, l), l.archetype))
            .filter(|&(o, _)| o > 0)
            .max_by_key(|&(o, _)| o)
            .map(|(_, a)| a)
    }
}

struct Ctx {
    corpus: Option<Result<Corpus, String>>,
}

impl Ctx {
    fn corpus(&mut self) -> Result<&Corpus, String> {
        self.corpus
            .get_or_insert_with(build_corpus)
            .as_ref()
            .map_err(Clone::clone)
    }
}

fn c1_detection(ctx: &mut Ctx) -> Verdict {
    let c = match ctx.corpus() {
        Ok(c) => c,
        Err(e) => return Verdict::new(false, e),
    };
    let best = c.best_event_per_label();
    let detected = best.iter().filter(|b| b.is_some()).count();
    let true_events = c
        .set
        .events
        .iter()
        .filter(|e| c.archetype_of(e).is_some())
        .count();
    let recall = detected as f64 / c.labels.len() as f64;
    let precision = true_events as f64 / c.set.events.len().max(1) as f64;
    let f1 = 2.0 * precision * recall / (precision + recall).max(f64::MIN_POSITIVE);
    let stages = ["synth", "train", "detect"];
    let measured: Option<u128> = stages
        .iter()
        .map(|s| c.timing.stage_ms.get(*s).copied())
        .sum();
    let (runtime_ok, runtime) = match measured {
        Some(ms) => (
            ms <= 30 * 60 * 1000,
            format!("{:.1} min", ms as f64 / 60_000.0),
        ),
        None => (false, "not measured".into()),
    };
    let archetypes: std::collections::BTreeSet<u8> = c.labels.iter().map(|l| l.archetype).collect();
    let hours = c.set.detect.duration_s / 3600.0;
    let corpus_ok = hours >= 8.0 - 1e-9 && c.labels.len() >= 500 && archetypes.len() == 16;
    Verdict::new(
        f1 >= 0.90 && runtime_ok && corpus_ok,
        format!(
            "F1 {f1:.4} (precision {precision:.4} over {} events, recall {recall:.4} over {} labels); synth+train+detect {runtime}; {hours:.1} h, {} archetypes",
            c.set.events.len(),
            c.labels.len(),
            archetypes.len()
        ),
    )
}

fn c2_false_positives(ctx: &mut Ctx) -> Verdict {
    let c = match ctx.corpus() {
        Ok(c) => c,
        Err(e) => return Verdict::new(false, e),
    };
    let dir = acceptance_root().join("clean");
    let synth = SynthConfig {
        seed: c.cfg.seed ^ 0x5eed,
        duration_s: 3600.0,
        event_rate: 0.0,
        super_event: None,
        ..SynthConfig::default()
    };
    let run = || -> gridsift::Result<_> {
        run_synth(&synth, &dir.join("synth"))?;
        run_detect(
            &dir.join("synth").join(gridsift::synth::CSV_NAME),
            &c.cfg.ingest,
            &c.lay.models_dir(),
            c.cfg.events,
            &dir.join("events"),
        )
    };
    match run() {
        Ok(s) => {
            let frac: Vec<f64> = s
                .flagged_per_feature
                .iter()
                .map(|&n| n as f64 / s.windows as f64)
                .collect();
            let worst = frac.iter().copied().fold(0.0, f64::max);
            let list: Vec<String> = frac.iter().map(|f| format!("{:.3}%", 100.0 * f)).collect();
            Verdict::new(
                worst <= 0.01,
                format!("{} windows; per feature [{}]", s.windows, list.join(", ")),
            )
        }
        Err(e) => Verdict::new(false, e.to_string()),
    }
}

fn c3_category_fidelity(ctx: &mut Ctx) -> Verdict {
    let c = match ctx.corpus() {
        Ok(c) => c,
        Err(e) => return Verdict::new(false, e),
    };
    let best = c.best_event_per_label();
    let mut pass = true;
    let mut parts = Vec::new();
    for a in [3u8, 8, 10, 11, 12, 13, 14, 15, 16] {
        let hits: Vec<&EventRecord> = c
            .labels
            .iter()
            .zip(&best)
            .filter(|(l, _)| l.archetype == a)
            .filter_map(|(_, b)| *b)
            .collect();
        let right = hits
            .iter()
            .filter(|e| e.category == u32::from(category_of(a)))
            .count();
        let frac = right as f64 / hits.len().max(1) as f64;
        pass &= !hits.is_empty() && frac >= 0.9;
        parts.push(format!("#{a} {right}/{}", hits.len()));
    }
    Verdict::new(pass, parts.join(", "))
}

/// Size-weighted mean over labels of the best F1 any single cluster attains.
fn cluster_f1(assigned: &[(u8, (u32, u32))]) -> f64 {
    let mut by_label: HashMap<u8, usize> = HashMap::new();
    let mut by_cluster: HashMap<(u32, u32), usize> = HashMap::new();
    let mut joint: HashMap<(u8, (u32, u32)), usize> = HashMap::new();
    for &(l, c) in assigned {
        *by_label.entry(l).or_default() += 1;
        *by_cluster.entry(c).or_default() += 1;
        *joint.entry((l, c)).or_default() += 1;
    }
    let total = assigned.len().max(1) as f64;
    by_label
        .iter()
        .map(|(&l, &nl)| {
            let best = by_cluster
                .iter()
                .map(|(&c, &nc)| {
                    let tp = joint.get(&(l, c)).copied().unwrap_or(0) as f64;
                    2.0 * tp / (nl + nc) as f64
                })
                .fold(0.0, f64::max);
            best * nl as f64 / total
        })
        .sum()
}

fn c4_clustering(ctx: &mut Ctx) -> Verdict {
    let c = match ctx.corpus() {
        Ok(c) => c,
        Err(e) => return Verdict::new(false, e),
    };
    let model = match ModelFile::load(&c.lay.cluster_model()) {
        Ok(m) => m,
        Err(e) => return Verdict::new(false, e.to_string()),
    };
    let by_id: HashMap<u64, &EventRecord> = c.set.events.iter().map(|e| (e.id, e)).collect();
    let mut assigned = Vec::new();
    let mut unlabeled = 0;
    for m in &model.categories {
        for cl in &m.clusters {
            for id in &cl.members {
                match by_id.get(id).and_then(|e| c.archetype_of(e)) {
                    Some(a) => assigned.push((a, (m.category, cl.id))),
                    None => unlabeled += 1,
                }
            }
        }
    }
    let f1 = cluster_f1(&assigned);
    let clusters: usize = model.categories.iter().map(|m| m.clusters.len()).sum();
    Verdict::new(
        f1 >= 0.90,
        format!(
            "F1 {f1:.4} over {} labeled events in {clusters} clusters ({unlabeled} without a label)",
            assigned.len()
        ),
    )
}

fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> ClusterInstance<f64> {
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..i {
            let v: f64 = rng.random_range(0.0..2.0);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    ClusterInstance::new(n, d).expect("valid instance")
}

/// Minimum objective over every labeling with at most `clusters` labels.
fn enumerate_optimum(inst: &ClusterInstance<f64>, clusters: usize) -> f64 {
    let mut labels = vec![0usize; inst.n];
    let mut best = f64::INFINITY;
    loop {
        best = best.min(objective(inst, &labels));
        let mut k = 0;
        loop {
            if k == inst.n {
                return best;
            }
            labels[k] += 1;
            if labels[k] < clusters {
                break;
            }
            labels[k] = 0;
            k += 1;
        }
    }
}

fn c5_exact_solver(_: &mut Ctx) -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut bad = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..=8);
        let clusters = rng.random_range(1..=3.min(n));
        let inst = random_instance(&mut rng, n);
        let a = solve_clustering(&inst, clusters, SolveMode::Exact, 15).expect("within cap");
        if a.objective != enumerate_optimum(&inst, clusters)
            || objective(&inst, &a.labels) != a.objective
        {
            bad += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    Verdict::new(
        bad == 0 && secs <= 60.0,
        format!("200 instances, {bad} mismatches, {secs:.2} s"),
    )
}

fn random_assignment(rng: &mut ChaCha8Rng, n: usize, clusters: usize) -> Assignment<f64> {
    // Every cluster gets at least one member.
    let mut labels: Vec<usize> = (0..n)
        .map(|i| {
            if i < clusters {
                i
            } else {
                rng.random_range(0..clusters)
            }
        })
        .collect();
    for i in (1..n).rev() {
        labels.swap(i, rng.random_range(0..=i));
    }
    let labels = canonical(&labels);
    Assignment {
        clusters,
        objective: 0.0,
        labels,
    }
}

fn c6_linearization(_: &mut Ctx) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let mut failed = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..=12);
        let clusters = rng.random_range(1..=4.min(n));
        let inst = random_instance(&mut rng, n);
        let a = random_assignment(&mut rng, n, clusters);
        match linearization_check(&inst, &a.u()) {
            Ok(lin) => worst = worst.max((lin - objective(&inst, &a.labels)).abs()),
            Err(_) => failed += 1,
        }
    }
    Verdict::new(
        failed == 0 && worst <= 1e-12,
        format!("100 assignments, {failed} rejected, max |quadratic - linearized| {worst:.1e}"),
    )
}

fn c7_representatives(_: &mut Ctx) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut bad = 0;
    for _ in 0..50 {
        let n = rng.random_range(2..=8);
        let clusters = rng.random_range(1..=3.min(n));
        let inst = random_instance(&mut rng, n);
        let a = random_assignment(&mut rng, n, clusters);
        let reps = select_representatives(&inst, &a).expect("non-empty clusters");
        let cost = |c: usize, j: usize| a.members(c).iter().map(|&i| inst.dist(i, j)).sum::<f64>();
        // Joint enumeration of every representative tuple.
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut pick = vec![0usize; clusters];
        'outer: loop {
            let total: f64 = pick.iter().enumerate().map(|(c, &j)| cost(c, j)).sum();
            if best.as_ref().is_none_or(|(b, _)| total < *b) {
                best = Some((total, pick.clone()));
            }
            for k in (0..clusters).rev() {
                pick[k] += 1;
                if pick[k] < n {
                    continue 'outer;
                }
                pick[k] = 0;
            }
            break;
        }
        let (total, brute) = best.expect("at least one tuple");
        let ours: f64 = reps.iter().enumerate().map(|(c, &j)| cost(c, j)).sum();
        if brute != reps || total != ours {
            bad += 1;
        }
    }
    Verdict::new(bad == 0, format!("50 instances, {bad} mismatches"))
}

fn random_event(rng: &mut ChaCha8Rng) -> EventMatrix<f64> {
    let len = rng.random_range(16..=96);
    let mut data = Vec::with_capacity(9 * len);
    for _ in 0..9 {
        let (freq, phase, amp): (f64, f64, f64) = (
            rng.random_range(0.5..4.0),
            rng.random_range(0.0..6.3),
            rng.random_range(0.1..3.0),
        );
        let offset: f64 = rng.random_range(-5.0..5.0);
        for t in 0..len {
            let z: f64 = rng.sample(StandardNormal);
            data.push(offset + amp * (freq * t as f64 / len as f64 * 6.3 + phase).sin() + 0.3 * z);
        }
    }
    EventMatrix::new(len, data).expect("non-empty")
}

fn c8_mcc(_: &mut Ctx) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = MccConfig {
        rows: RowFilter::Variance,
        ..MccConfig::default()
    };
    let mut corr = Correlator::default();
    let (mut self_err, mut shift_err, mut affine_err, mut fft_err): (f64, f64, f64, f64) =
        (0.0, 0.0, 0.0, 0.0);
    let mut asymmetric = 0;
    for _ in 0..1000 {
        let a = random_event(&mut rng);
        let b = random_event(&mut rng);
        self_err = self_err.max((mcc(&a, &a, &cfg) - 1.0).abs());
        let ab = mcc(&a, &b, &cfg);
        if ab != mcc(&b, &a, &cfg) {
            asymmetric += 1;
        }
        let k = rng.random_range(0..=a.len);
        shift_err = shift_err.max((mcc(&a, &a.roll(k).expect("k <= len"), &cfg) - 1.0).abs());
        let mut scaled = b.clone();
        for f in 0..9 {
            let (s, o): (f64, f64) = (rng.random_range(0.1..10.0), rng.random_range(-50.0..50.0));
            for v in &mut scaled.data[f * b.len..(f + 1) * b.len] {
                *v = s * *v + o;
            }
        }
        affine_err = affine_err.max((mcc(&a, &scaled, &cfg) - ab).abs());
        let pair = AlignedPair::new(&a, &b, &cfg);
        fft_err = fft_err.max((corr.mcc(&pair) - mcc_naive(&pair)).abs());
    }
    let pass = self_err <= 1e-9
        && asymmetric == 0
        && shift_err <= 1e-9
        && affine_err <= 1e-9
        && fft_err <= 1e-9;
    Verdict::new(
        pass,
        format!(
            "1000 events: self {self_err:.1e}, asymmetric {asymmetric}, shift {shift_err:.1e}, scale/offset {affine_err:.1e}, fft vs naive {fft_err:.1e}"
        ),
    )
}

fn central_difference(params: &[f64], k: usize, f: &dyn Fn(&[f64]) -> f64) -> f64 {
    let h = 1e-5;
    let mut p = params.to_vec();
    p[k] = params[k] + h;
    let up = f(&p);
    p[k] = params[k] - h;
    let down = f(&p);
    (up - down) / (2.0 * h)
}

/// Relative disagreement, with a floor so vanishing gradients compare absolutely.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

fn c9_gradients(_: &mut Ctx) -> Verdict {
    let arch = Architecture {
        window_len: 6,
        noise_dim: 2,
        gen_hidden: 4,
        disc_hidden: 3,
        ..Architecture::default()
    };
    let batch = 3;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for point in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + point);
        let (g, d): (Vec<f64>, Vec<f64>) = arch.init_params(&mut rng);
        let real: Vec<f64> = (0..arch.window_len * batch)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let noise: Vec<f64> = (0..arch.window_len * batch * arch.noise_dim)
            .map(|_| rng.sample(StandardNormal))
            .collect();

        let disc = discriminator_gradients(&arch, &g, &d, &real, &noise, batch);
        let loss_d =
            |p: &[f64]| -discriminator_gradients(&arch, &g, p, &real, &noise, batch).objective;
        for k in 0..d.len() {
            worst = worst.max(rel_err(disc.grads[k], central_difference(&d, k, &loss_d)));
            checked += 1;
        }
        for mode in [GeneratorLoss::Minimax, GeneratorLoss::NonSaturating] {
            let gen = generator_gradients(&arch, &g, &d, &noise, batch, mode);
            let loss_g = |p: &[f64]| generator_gradients(&arch, p, &d, &noise, batch, mode).loss;
            for k in 0..g.len() {
                worst = worst.max(rel_err(gen.grads[k], central_difference(&g, k, &loss_g)));
                checked += 1;
            }
        }
    }
    Verdict::new(
        worst <= 1e-4,
        format!("10 points, {checked} partials, worst relative error {worst:.1e}"),
    )
}

fn pool(set: &[Planted], first_id: u64) -> Vec<PoolEvent<f64>> {
    set.iter()
        .enumerate()
        .map(|(k, p)| PoolEvent {
            id: first_id + k as u64,
            ts: p.ts,
            m: p.m.clone(),
        })
        .collect()
}

fn c10_silhouette(_: &mut Ctx) -> Verdict {
    let params = ClusterParams::default();
    let mut counts = Vec::new();
    for trial in 0..10 {
        let kinds: Vec<(u8, usize)> = (1..=6).map(|a| (a, 10)).collect();
        let (set, scale) = planted_set(&kinds, 1000 + trial);
        let cfg = MccConfig {
            scale,
            ..MccConfig::default()
        };
        let ids: Vec<u64> = (0..set.len() as u64).collect();
        let mats: Vec<EventMatrix<f64>> = set.iter().map(|p| p.m.clone()).collect();
        let chosen = build_similarity_matrix(&ids, &mats, &cfg)
            .and_then(|sim| ClusterInstance::from_similarity(&sim))
            .and_then(|inst| {
                select_cluster_count(&inst, params.c_max, params.s_min, params.exact_cap)
            })
            .map_or(0, |s| s.chosen);
        counts.push(chosen);
    }
    let hits = counts.iter().filter(|&&c| c == 6).count();
    Verdict::new(
        hits >= 8,
        format!("{hits}/10 trials chose 6 (chosen {counts:?})"),
    )
}

fn c11_active(_: &mut Ctx) -> Verdict {
    let params = ClusterParams::default();
    let known: Vec<(u8, usize)> = (1..=5).map(|a| (a, 12)).collect();
    let (fit_set, scale) = planted_set(&known, 1100);
    let cfg = MccConfig {
        scale,
        ..MccConfig::default()
    };
    let fit_pool = pool(&fit_set, 1);
    let mut model = match fit_category(1, &fit_pool, &params, &cfg, None) {
        Ok((m, _)) => m,
        Err(e) => return Verdict::new(false, e.to_string()),
    };
    // Each fitted cluster stands for its majority archetype.
    let arch_of: HashMap<u64, u8> = fit_pool
        .iter()
        .zip(&fit_set)
        .map(|(e, p)| (e.id, p.archetype))
        .collect();
    let mut stands_for: HashMap<u32, u8> = HashMap::new();
    for c in &model.clusters {
        let mut tally: BTreeMap<u8, usize> = BTreeMap::new();
        for id in &c.members {
            *tally.entry(arch_of[id]).or_default() += 1;
        }
        if let Some((&a, _)) = tally.iter().max_by_key(|&(_, n)| *n) {
            stands_for.insert(c.id, a);
        }
    }
    let fitted = model.clusters.len();

    let mut stream_kinds: Vec<(u8, usize)> = (1..=5).map(|a| (a, 8)).collect();
    stream_kinds.push((6, 8));
    let (stream_set, _) = planted_set(&stream_kinds, 1101);
    let stream = pool(&stream_set, 1000);
    let mut mats: HashMap<u64, EventMatrix<f64>> =
        fit_pool.iter().map(|e| (e.id, e.m.clone())).collect();
    let (mut known_total, mut known_right) = (0, 0);
    let mut novel_clusters: Vec<u32> = Vec::new();
    for (e, p) in stream.iter().zip(&stream_set) {
        mats.insert(e.id, e.m.clone());
        let id = match model.active_assign(e, |r| mats.get(&r).cloned(), &cfg) {
            Ok(id) => id,
            Err(err) => return Verdict::new(false, err.to_string()),
        };
        if p.archetype == 6 {
            novel_clusters.push(id);
        } else {
            known_total += 1;
            known_right += usize::from(stands_for.get(&id) == Some(&p.archetype));
        }
    }
    let created = model.clusters.len() - fitted;
    novel_clusters.sort_unstable();
    novel_clusters.dedup();
    let novel_ok = created == 1 && novel_clusters.len() == 1 && novel_clusters[0] as usize > fitted;
    let frac = known_right as f64 / known_total as f64;
    Verdict::new(
        novel_ok && frac >= 0.95,
        format!(
            "{fitted} fitted clusters, {created} created, held-out events in clusters {novel_clusters:?}, known {known_right}/{known_total}"
        ),
    )
}

fn random_timeline(rng: &mut ChaCha8Rng) -> Vec<TimelineEvent> {
    let n = rng.random_range(0..150);
    let mut ts = 0i64;
    (0..n)
        .map(|k| {
            ts += rng.random_range(0..40_000_000);
            let len = rng.random_range(100_000..2_000_000);
            TimelineEvent {
                id: k as u64 + 1,
                start_ts: ts,
                end_ts: ts + len,
                cluster: ClusterRef {
                    category: rng.random_range(1..=2),
                    cluster: rng.random_range(1..=2),
                },
            }
        })
        .collect()
}

fn c12_sequences(ctx: &mut Ctx) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut disagree = 0;
    for _ in 0..100 {
        let tl = random_timeline(&mut rng);
        let rule = SequenceRule {
            trigger: ClusterRef {
                category: 1,
                cluster: 1,
            },
            follower: ClusterRef {
                category: rng.random_range(1..=2),
                cluster: 2,
            },
            max_gap_s: rng.random_range(1.0..60.0),
            min_count: rng.random_range(1..6),
        };
        if mine_sequences(&tl, &rule).ok() != Some(mine_sequences_brute(&tl, &rule)) {
            disagree += 1;
        }
    }
    let c = match ctx.corpus() {
        Ok(c) => c,
        Err(e) => {
            return Verdict::new(
                false,
                format!("brute force disagreements {disagree}; corpus: {e}"),
            )
        }
    };
    let reports: Vec<SequenceReport> = match std::fs::read(c.lay.reports_dir().join(SEQUENCES_NAME))
        .map_err(|e| e.to_string())
        .and_then(|b| serde_json::from_slice(&b).map_err(|e| e.to_string()))
    {
        Ok(r) => r,
        Err(e) => return Verdict::new(false, e),
    };
    // Events lying on the planted followers.
    let by_id: HashMap<u64, &EventRecord> = c.set.events.iter().map(|e| (e.id, e)).collect();
    let on_role = |id: u64, role: Role| {
        by_id.get(&id).is_some_and(|e| {
            let core = c.core(e);
            c.labels
                .iter()
                .any(|l| l.role == role && Corpus::overlap(core, l) > 0)
        })
    };
    let mut total = 0;
    let mut planted = Vec::new();
    for r in &reports {
        for m in &r.matches {
            total += 1;
            if m.followers.iter().any(|&f| on_role(f, Role::Follower)) {
                planted.push((on_role(m.trigger, Role::Trigger), m.followers.len()));
            }
        }
    }
    let pass = disagree == 0 && planted.len() == 1 && planted[0].0 && planted[0].1 >= 100;
    Verdict::new(
        pass,
        format!(
            "brute force disagreements {disagree}/100; {total} reported sequences, {} on the planted burst (trigger matched, followers): {planted:?}",
            planted.len()
        ),
    )
}

/// Relative path and bytes of every file under `root`.
fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let Ok(entries) = std::fs::read_dir(&dir) else {
            continue;
        };
        for e in entries.flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else if let Ok(bytes) = std::fs::read(&p) {
                out.insert(
                    p.strip_prefix(root).expect("under root").to_path_buf(),
                    bytes,
                );
            }
        }
    }
    out
}

fn c13_determinism(_: &mut Ctx) -> Verdict {
    let mut cfg = PipelineConfig {
        threads: 1,
        ..PipelineConfig::default()
    };
    cfg.synth.minutes = 20.0;
    cfg.train.minutes = 10.0;
    cfg.replay.fit_minutes = 15.0;
    cfg.detector.epochs = 3;
    cfg.detector.max_train_windows = 128;
    let root = acceptance_root().join("determinism");
    let mut snaps = Vec::new();
    for run in ["a", "b"] {
        let dir = root.join(run);
        let _ = std::fs::remove_dir_all(&dir);
        cfg.paths.work_dir = dir.clone();
        let lay = Layout::new(&cfg);
        let pool = match thread_pool(1) {
            Ok(p) => p,
            Err(e) => return Verdict::new(false, e.to_string()),
        };
        for stage in Stage::ALL {
            if let Err(e) = pool.install(|| run_stage(&cfg, &lay, stage)) {
                return Verdict::new(false, format!("run {run} stage {}: {e}", stage.name()));
            }
        }
        snaps.push(snapshot(&dir));
    }
    let (a, b) = (&snaps[0], &snaps[1]);
    let differing: Vec<String> = a
        .keys()
        .chain(b.keys())
        .filter(|k| a.get(*k) != b.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    Verdict::new(
        differing.is_empty() && !a.is_empty(),
        format!(
            "{} files per run, {} differ {:?}",
            a.len(),
            differing.len(),
            differing
        ),
    )
}

type Check = fn(&mut Ctx) -> Verdict;

fn main() {
    let checks: [(u32, &str, Check); 13] = [
        (
            1,
            "detection F1 and runtime on the default corpus",
            c1_detection,
        ),
        (
            2,
            "false positives on an event-free hour",
            c2_false_positives,
        ),
        (
            3,
            "category fidelity of detected archetypes",
            c3_category_fidelity,
        ),
        (4, "cluster F1 on detected events", c4_clustering),
        (5, "exact solver vs enumeration", c5_exact_solver),
        (6, "quadratic vs linearized objective", c6_linearization),
        (7, "representatives vs brute force", c7_representatives),
        (8, "MCC property suite", c8_mcc),
        (9, "GAN gradients vs finite differences", c9_gradients),
        (10, "silhouette recovers six planted types", c10_silhouette),
        (
            11,
            "active clustering with a held-out archetype",
            c11_active,
        ),
        (12, "sequence mining", c12_sequences),
        (13, "byte-identical single-threaded runs", c13_determinism),
    ];
    let only: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut ctx = Ctx { corpus: None };
    let mut failed = 0;
    for (id, name, check) in checks {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let v = check(&mut ctx);
        failed += usize::from(!v.pass);
        println!(
            "criterion {id:>2} {}: {name}: {} [{:.1} s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {failed} failing");
    if failed > 0 && std::env::var_os("GRIDSIFT_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
