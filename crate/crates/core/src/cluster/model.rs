use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rustfft::FftNum;
use serde::{Deserialize, Serialize};

use super::silhouette::{select_cluster_count, DEFAULT_C_MAX, DEFAULT_S_MIN};
use super::solve::{select_representatives, ClusterInstance, SolveMode, DEFAULT_EXACT_CAP};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::similarity::{
    build_similarity_matrix, AlignedPair, Correlator, EventMatrix, MccConfig, SimilarityCache,
    SimilarityMatrix,
};

pub const MODEL_VERSION: u32 = 1;
pub const DEFAULT_THETA_ACTIVE: f64 = 0.8;
/// Largest sample a periodic re-solve clusters.
pub const DEFAULT_I_MAX: usize = 600;
pub const DEFAULT_REOPT_EVENTS: usize = 10_000;
pub const DEFAULT_REOPT_DAYS: f64 = 7.0;
const MICROS_PER_DAY: f64 = 86_400e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterParams {
    pub c_max: usize,
    pub theta_active: f64,
    pub exact_cap: usize,
    pub s_min: f64,
    pub i_max: usize,
    pub reopt_events: usize,
    pub reopt_days: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            c_max: DEFAULT_C_MAX,
            theta_active: DEFAULT_THETA_ACTIVE,
            exact_cap: DEFAULT_EXACT_CAP,
            s_min: DEFAULT_S_MIN,
            i_max: DEFAULT_I_MAX,
            reopt_events: DEFAULT_REOPT_EVENTS,
            reopt_days: DEFAULT_REOPT_DAYS,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.c_max < 2 {
            bad.push(format!("c_max = {} must be at least 2", self.c_max));
        }
        if !(self.theta_active > 0.0 && self.theta_active <= 1.0) {
            bad.push(format!(
                "theta_active = {} must lie in (0, 1]",
                self.theta_active
            ));
        }
        if self.exact_cap == 0 {
            bad.push("exact_cap must be positive".into());
        }
        if !(-1.0..=1.0).contains(&self.s_min) {
            bad.push(format!("s_min = {} must lie in [-1, 1]", self.s_min));
        }
        if self.i_max < 2 {
            bad.push(format!("i_max = {} must be at least 2", self.i_max));
        }
        if self.reopt_events == 0 || !(self.reopt_days > 0.0) {
            bad.push("reoptimization triggers must be positive".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }
}

/// An event available to the clustering stage.
#[derive(Debug, Clone)]
pub struct PoolEvent<T> {
    pub id: u64,
    pub ts: i64,
    pub m: EventMatrix<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: u32,
    pub members: Vec<u64>,
    pub representative: u64,
    pub created_ts: i64,
    pub updated_ts: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveInfo {
    pub events: usize,
    pub mode: SolveMode,
    pub chosen: usize,
    pub silhouettes: Vec<(usize, f64)>,
    pub objective: f64,
    pub solved_ts: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub category: u32,
    pub theta_active: f64,
    pub clusters: Vec<Cluster>,
    pub next_id: u32,
    pub created_ts: i64,
    pub updated_ts: i64,
    pub solve: Option<SolveInfo>,
    /// Events added by active assignment since the last full solve.
    pub events_since_solve: usize,
}

/// Outcome of matching one event against the representatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    /// Best cluster and its MCC, if the model has any cluster.
    pub best: Option<(u32, f64)>,
    /// Whether the best MCC clears the threshold.
    pub accepted: bool,
}

impl ClusterModel {
    pub fn empty(category: u32, theta_active: f64, ts: i64) -> Self {
        Self {
            category,
            theta_active,
            clusters: Vec::new(),
            next_id: 1,
            created_ts: ts,
            updated_ts: ts,
            solve: None,
            events_since_solve: 0,
        }
    }

    pub fn cluster(&self, id: u32) -> Option<&Cluster> {
        self.clusters.iter().find(|c| c.id == id)
    }

    pub fn cluster_of(&self, event: u64) -> Option<u32> {
        self.clusters
            .iter()
            .find(|c| c.members.contains(&event))
            .map(|c| c.id)
    }

    pub fn check(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in &self.clusters {
            if c.members.is_empty() {
                return Err(Error::Consistency(format!(
                    "cluster {} has no members",
                    c.id
                )));
            }
            if c.id >= self.next_id {
                return Err(Error::Consistency(format!(
                    "cluster id {} not below next id {}",
                    c.id, self.next_id
                )));
            }
            for m in &c.members {
                if !seen.insert(*m) {
                    return Err(Error::Consistency(format!("event {m} is in two clusters")));
                }
            }
        }
        Ok(())
    }

    /// Read-only: MCC against every representative; ties go to the lowest
    /// cluster id.
    pub fn best_match<T, F>(
        &self,
        event: &EventMatrix<T>,
        reps: F,
        cfg: &MccConfig,
        corr: &mut Correlator<T>,
    ) -> Result<Match>
    where
        T: Scalar + FftNum,
        F: Fn(u64) -> Option<EventMatrix<T>>,
    {
        let mut order: Vec<&Cluster> = self.clusters.iter().collect();
        order.sort_by_key(|c| c.id);
        let mut best: Option<(u32, f64)> = None;
        for c in order {
            let rep = reps(c.representative).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "representative event {} not available",
                    c.representative
                ))
            })?;
            let v = corr.mcc(&AlignedPair::new(event, &rep, cfg)).as_f64();
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((c.id, v));
            }
        }
        Ok(Match {
            best,
            accepted: best.is_some_and(|(_, v)| v >= self.theta_active),
        })
    }

    /// Single-writer update: joins the matched cluster or opens a new one
    /// with the event as its representative. Returns the cluster id.
    pub fn apply(&mut self, m: Match, event: u64, ts: i64) -> u32 {
        self.events_since_solve += 1;
        self.updated_ts = self.updated_ts.max(ts);
        if let (true, Some((id, _))) = (m.accepted, m.best) {
            let c = self
                .clusters
                .iter_mut()
                .find(|c| c.id == id)
                .expect("matched cluster exists");
            c.members.push(event);
            c.updated_ts = c.updated_ts.max(ts);
            return id;
        }
        let id = self.next_id;
        self.next_id += 1;
        self.clusters.push(Cluster {
            id,
            members: vec![event],
            representative: event,
            created_ts: ts,
            updated_ts: ts,
        });
        id
    }

    pub fn active_assign<T, F>(
        &mut self,
        event: &PoolEvent<T>,
        reps: F,
        cfg: &MccConfig,
    ) -> Result<u32>
    where
        T: Scalar + FftNum,
        F: Fn(u64) -> Option<EventMatrix<T>>,
    {
        let m = self.best_match(&event.m, reps, cfg, &mut Correlator::default())?;
        Ok(self.apply(m, event.id, event.ts))
    }

    pub fn reoptimize_due(&self, params: &ClusterParams, now_ts: i64) -> bool {
        let last = self.solve.as_ref().map_or(self.created_ts, |s| s.solved_ts);
        self.events_since_solve >= params.reopt_events
            || (self.events_since_solve > 0
                && (now_ts - last) as f64 >= params.reopt_days * MICROS_PER_DAY)
    }
}

/// Full solve on one category: similarity matrix, silhouette-chosen count,
/// clustering and representatives.
pub fn fit_category<T: Scalar + FftNum>(
    category: u32,
    events: &[PoolEvent<T>],
    params: &ClusterParams,
    cfg: &MccConfig,
    cache: Option<&SimilarityCache>,
) -> Result<(ClusterModel, SimilarityMatrix<T>)> {
    if events.is_empty() {
        return Err(Error::InsufficientData(format!(
            "category {category} has no events"
        )));
    }
    let ids: Vec<u64> = events.iter().map(|e| e.id).collect();
    let mats: Vec<EventMatrix<T>> = events.iter().map(|e| e.m.clone()).collect();
    let sim = match cache {
        Some(c) => c.get_or_build(category, &ids, &mats, cfg)?,
        None => build_similarity_matrix(&ids, &mats, cfg)?,
    };
    let inst = ClusterInstance::from_similarity(&sim)?;
    let sel = select_cluster_count(&inst, params.c_max, params.s_min, params.exact_cap)?;
    let a = sel
        .assignment
        .clone()
        .expect("selection carries its assignment");
    let reps = select_representatives(&inst, &a)?;
    let ts_max = events.iter().map(|e| e.ts).max().unwrap_or(0);
    let ts_min = events.iter().map(|e| e.ts).min().unwrap_or(0);
    let clusters = (0..a.clusters)
        .map(|c| {
            let members = a.members(c);
            Cluster {
                id: c as u32 + 1,
                members: members.iter().map(|&i| ids[i]).collect(),
                representative: ids[reps[c]],
                created_ts: members
                    .iter()
                    .map(|&i| events[i].ts)
                    .min()
                    .unwrap_or(ts_min),
                updated_ts: members
                    .iter()
                    .map(|&i| events[i].ts)
                    .max()
                    .unwrap_or(ts_max),
            }
        })
        .collect::<Vec<_>>();
    let model = ClusterModel {
        category,
        theta_active: params.theta_active,
        next_id: clusters.len() as u32 + 1,
        clusters,
        created_ts: ts_min,
        updated_ts: ts_max,
        solve: Some(SolveInfo {
            events: events.len(),
            mode: if events.len() <= params.exact_cap {
                SolveMode::Exact
            } else {
                SolveMode::Heuristic
            },
            chosen: sel.chosen,
            silhouettes: sel.scores.iter().map(|&(c, s)| (c, s.as_f64())).collect(),
            objective: a.objective.as_f64(),
            solved_ts: ts_max,
        }),
        events_since_solve: 0,
    };
    Ok((model, sim))
}

/// Periodic full re-solve on the most recent `i_max` events plus the current
/// representatives. New clusters take over the id of the old cluster they
/// share the largest fraction of members with; events outside the sample
/// join the closest new representative.
pub fn reoptimize<T: Scalar + FftNum>(
    model: &ClusterModel,
    pool: &[PoolEvent<T>],
    params: &ClusterParams,
    cfg: &MccConfig,
    now_ts: i64,
) -> Result<ClusterModel> {
    if model.events_since_solve == 0 {
        return Ok(model.clone());
    }
    let by_id: HashMap<u64, usize> = pool.iter().enumerate().map(|(k, e)| (e.id, k)).collect();
    let known: BTreeSet<u64> = model
        .clusters
        .iter()
        .flat_map(|c| c.members.iter().copied())
        .collect();
    let mut recent: Vec<usize> = known
        .iter()
        .filter_map(|id| by_id.get(id).copied())
        .collect();
    recent.sort_by_key(|&k| (std::cmp::Reverse(pool[k].ts), std::cmp::Reverse(pool[k].id)));
    recent.truncate(params.i_max);
    let mut sample: BTreeSet<usize> = recent.into_iter().collect();
    for c in &model.clusters {
        if let Some(&k) = by_id.get(&c.representative) {
            sample.insert(k);
        }
    }
    let sample: Vec<usize> = sample.into_iter().collect();
    let events: Vec<PoolEvent<T>> = sample.iter().map(|&k| pool[k].clone()).collect();
    let (mut fresh, _) = fit_category(model.category, &events, params, cfg, None)?;

    // Remap ids by member overlap fraction with the previous clusters.
    let sampled: BTreeSet<u64> = events.iter().map(|e| e.id).collect();
    let mut pairs = Vec::new();
    for old in &model.clusters {
        let kept: Vec<u64> = old
            .members
            .iter()
            .copied()
            .filter(|m| sampled.contains(m))
            .collect();
        if kept.is_empty() {
            continue;
        }
        for (k, new) in fresh.clusters.iter().enumerate() {
            let overlap = kept.iter().filter(|m| new.members.contains(m)).count();
            if overlap > 0 {
                pairs.push((overlap as f64 / kept.len() as f64, overlap, old.id, k));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(b.1.cmp(&a.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    });
    let mut new_ids: BTreeMap<usize, u32> = BTreeMap::new();
    let mut used: BTreeSet<u32> = BTreeSet::new();
    for (_, _, old_id, k) in pairs {
        if !new_ids.contains_key(&k) && !used.contains(&old_id) {
            new_ids.insert(k, old_id);
            used.insert(old_id);
        }
    }
    let mut next_id = model.next_id;
    for (k, c) in fresh.clusters.iter_mut().enumerate() {
        c.id = *new_ids.entry(k).or_insert_with(|| {
            next_id += 1;
            next_id - 1
        });
    }
    fresh.clusters.sort_by_key(|c| c.id);
    fresh.next_id = next_id;

    // Members left out of the sample follow their closest new representative.
    let mut corr = Correlator::default();
    let reps: Vec<(usize, u64)> = fresh
        .clusters
        .iter()
        .enumerate()
        .map(|(k, c)| (k, c.representative))
        .collect();
    for id in known.iter().filter(|id| !sampled.contains(id)) {
        let Some(&k) = by_id.get(id) else { continue };
        let mut best = (0usize, f64::NEG_INFINITY);
        for &(ck, rep) in &reps {
            let r = &pool[by_id[&rep]].m;
            let v = corr.mcc(&AlignedPair::new(&pool[k].m, r, cfg)).as_f64();
            if v > best.1 {
                best = (ck, v);
            }
        }
        fresh.clusters[best.0].members.push(*id);
    }
    for c in &mut fresh.clusters {
        c.members.sort_unstable();
    }
    fresh.theta_active = model.theta_active;
    fresh.created_ts = model.created_ts;
    fresh.updated_ts = model.updated_ts.max(now_ts);
    if let Some(s) = fresh.solve.as_mut() {
        s.solved_ts = now_ts;
    }
    fresh.check()?;
    Ok(fresh)
}

/// Persisted models for every category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub version: u32,
    pub params: ClusterParams,
    pub mcc: MccConfig,
    pub categories: Vec<ClusterModel>,
}

impl ModelFile {
    pub fn category(&self, id: u32) -> Option<&ClusterModel> {
        self.categories.iter().find(|m| m.category == id)
    }

    pub fn category_mut(&mut self, id: u32) -> Option<&mut ClusterModel> {
        self.categories.iter_mut().find(|m| m.category == id)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        crate::events::store::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: Self = serde_json::from_str(&text)?;
        if file.version != MODEL_VERSION {
            return Err(Error::Version {
                found: file.version,
                expected: MODEL_VERSION,
            });
        }
        for m in &file.categories {
            m.check()?;
        }
        Ok(file)
    }
}
