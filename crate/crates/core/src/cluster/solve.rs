use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::similarity::SimilarityMatrix;

pub const DEFAULT_EXACT_CAP: usize = 15;

/// Distances `d = 1 - MCC` over `n` events, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterInstance<T> {
    pub n: usize,
    pub d: Vec<T>,
}

impl<T: Scalar> ClusterInstance<T> {
    pub fn new(n: usize, d: Vec<T>) -> Result<Self> {
        let inst = Self { n, d };
        inst.check()?;
        Ok(inst)
    }

    pub fn from_similarity(m: &SimilarityMatrix<T>) -> Result<Self> {
        Self::new(m.n(), m.distances())
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> T {
        self.d[i * self.n + j]
    }

    pub fn check(&self) -> Result<()> {
        if self.n == 0 || self.d.len() != self.n * self.n {
            return Err(Error::Shape {
                expected: format!("non-empty {0} x {0} distance matrix", self.n),
                got: self.d.len().to_string(),
            });
        }
        let two = T::of(2.0);
        for i in 0..self.n {
            if self.dist(i, i) != T::zero() {
                return Err(Error::InvalidArgument(format!(
                    "distance ({i}, {i}) is not 0"
                )));
            }
            for j in 0..i {
                let v = self.dist(i, j);
                if v != self.dist(j, i) || !(v >= T::zero() && v <= two) {
                    return Err(Error::InvalidArgument(format!(
                        "distance ({i}, {j}) is asymmetric or outside [0, 2]"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    Exact,
    Heuristic,
}

/// One cluster label per event (the nonzero column of each row of `u`)
/// with the objective it attains. Labels are canonical (numbered by first
/// appearance) and `clusters` counts the non-empty ones, which can be below
/// the requested count when zero distances make extra clusters free.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment<T> {
    pub labels: Vec<usize>,
    pub clusters: usize,
    pub objective: T,
}

impl<T: Scalar> Assignment<T> {
    /// The binary matrix `u`, `n x clusters`.
    pub fn u(&self) -> Vec<Vec<bool>> {
        self.labels
            .iter()
            .map(|&l| (0..self.clusters).map(|c| c == l).collect())
            .collect()
    }

    pub fn members(&self, c: usize) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i] == c)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.clusters];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }
}

/// Sum over ordered pairs in the same cluster, in a fixed order so every
/// caller gets the same rounding.
pub fn objective<T: Scalar>(inst: &ClusterInstance<T>, labels: &[usize]) -> T {
    let mut total = T::zero();
    for i in 0..inst.n {
        for j in 0..inst.n {
            if labels[i] == labels[j] {
                total += inst.dist(i, j);
            }
        }
    }
    total
}

/// Renumbers labels by first appearance.
pub fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<Option<usize>> = Vec::new();
    let mut next = 0;
    labels
        .iter()
        .map(|&l| {
            if map.len() <= l {
                map.resize(l + 1, None);
            }
            *map[l].get_or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

fn validate<T: Scalar>(inst: &ClusterInstance<T>, clusters: usize) -> Result<()> {
    if clusters == 0 || clusters > inst.n {
        return Err(Error::InvalidArgument(format!(
            "cluster count {clusters} for {} events",
            inst.n
        )));
    }
    Ok(())
}

pub fn solve_clustering<T: Scalar>(
    inst: &ClusterInstance<T>,
    clusters: usize,
    mode: SolveMode,
    exact_cap: usize,
) -> Result<Assignment<T>> {
    validate(inst, clusters)?;
    match mode {
        SolveMode::Exact => {
            if inst.n > exact_cap {
                return Err(Error::ExactCapExceeded {
                    events: inst.n,
                    cap: exact_cap,
                });
            }
            Ok(solve_exact(inst, clusters))
        }
        SolveMode::Heuristic => Ok(solve_heuristic(inst, clusters).0),
    }
}

/// Exact when the instance fits under the cap, heuristic otherwise.
pub fn solve_auto<T: Scalar>(
    inst: &ClusterInstance<T>,
    clusters: usize,
    exact_cap: usize,
) -> Result<Assignment<T>> {
    let mode = if inst.n <= exact_cap {
        SolveMode::Exact
    } else {
        SolveMode::Heuristic
    };
    solve_clustering(inst, clusters, mode, exact_cap)
}

struct Search<'a, T> {
    inst: &'a ClusterInstance<T>,
    clusters: usize,
    labels: Vec<usize>,
    best: Vec<usize>,
    best_cost: T,
    /// Whether `best` came from the search itself rather than the seed.
    found: bool,
}

impl<T: Scalar> Search<'_, T> {
    fn descend(&mut self, i: usize, opened: usize, cost: T) {
        if self.found && cost >= self.best_cost || cost > self.best_cost {
            return;
        }
        if i == self.inst.n {
            if cost < self.best_cost || !self.found {
                self.best_cost = cost;
                self.best.clone_from(&self.labels);
                self.found = true;
            }
            return;
        }
        let limit = (opened + 1).min(self.clusters);
        for c in 0..limit {
            let mut add = T::zero();
            for j in 0..i {
                if self.labels[j] == c {
                    add += self.inst.dist(i, j);
                }
            }
            self.labels[i] = c;
            self.descend(i + 1, opened.max(c + 1), cost + add + add);
        }
    }
}

/// Depth-first branch and bound over events in index order. Event `i` may
/// open cluster `c` only when clusters below `c` are in use, which removes
/// label permutations. The bound is the within-cluster cost of the events
/// placed so far; distances are non-negative so it never overestimates.
fn solve_exact<T: Scalar>(inst: &ClusterInstance<T>, clusters: usize) -> Assignment<T> {
    let (seed, _) = solve_heuristic(inst, clusters);
    // Lexicographic search order means the first optimum reached is the
    // lowest-index one; the seed only tightens pruning until then.
    let mut s = Search {
        inst,
        clusters,
        labels: vec![0; inst.n],
        best: seed.labels.clone(),
        best_cost: seed.objective + seed.objective.abs() * T::of(1e-12),
        found: false,
    };
    s.descend(0, 0, T::zero());
    finish(inst, if s.found { s.best } else { seed.labels })
}

/// Farthest-first starts tried by the heuristic.
pub const HEURISTIC_STARTS: usize = 8;

/// Medoid seeding: the event with the smallest total distance first, then
/// repeatedly the event farthest from its nearest chosen medoid.
pub fn seed_medoids<T: Scalar>(inst: &ClusterInstance<T>, clusters: usize) -> Vec<usize> {
    let n = inst.n;
    let row_sum = |i: usize| (0..n).map(|j| inst.dist(i, j)).sum::<T>();
    let mut first = 0;
    let mut best = row_sum(0);
    for i in 1..n {
        let s = row_sum(i);
        if s < best {
            best = s;
            first = i;
        }
    }
    farthest_first(inst, clusters, first)
}

fn farthest_first<T: Scalar>(
    inst: &ClusterInstance<T>,
    clusters: usize,
    first: usize,
) -> Vec<usize> {
    let n = inst.n;
    let mut medoids = vec![first];
    let mut near: Vec<T> = (0..n).map(|i| inst.dist(i, first)).collect();
    while medoids.len() < clusters {
        let mut pick = None;
        let mut far = -T::one();
        for i in 0..n {
            if !medoids.contains(&i) && near[i] > far {
                far = near[i];
                pick = Some(i);
            }
        }
        let p = pick.expect("clusters <= n leaves a candidate");
        medoids.push(p);
        for i in 0..n {
            near[i] = near[i].min(inst.dist(i, p));
        }
    }
    medoids
}

/// Each event joins its nearest medoid; medoids label themselves.
fn nearest<T: Scalar>(inst: &ClusterInstance<T>, medoids: &[usize]) -> Vec<usize> {
    (0..inst.n)
        .map(|i| {
            if let Some(c) = medoids.iter().position(|&m| m == i) {
                return c;
            }
            let mut best = 0;
            for c in 1..medoids.len() {
                if inst.dist(i, medoids[c]) < inst.dist(i, medoids[best]) {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Alternates nearest-medoid assignment and per-cluster medoid updates
/// until the medoids settle.
fn refine_medoids<T: Scalar>(inst: &ClusterInstance<T>, mut medoids: Vec<usize>) -> Vec<usize> {
    for _ in 0..100 {
        let labels = nearest(inst, &medoids);
        let next: Vec<usize> = (0..medoids.len())
            .map(|c| {
                let members: Vec<usize> = (0..inst.n).filter(|&i| labels[i] == c).collect();
                let cost = |j: usize| members.iter().map(|&i| inst.dist(i, j)).sum::<T>();
                let mut best = medoids[c];
                let mut best_cost = cost(best);
                for &j in &members {
                    let v = cost(j);
                    if v < best_cost {
                        best = j;
                        best_cost = v;
                    }
                }
                best
            })
            .collect();
        if next == medoids {
            return labels;
        }
        medoids = next;
    }
    nearest(inst, &medoids)
}

/// First-improvement single-event moves until no move lowers the objective.
fn local_search<T: Scalar>(inst: &ClusterInstance<T>, clusters: usize, labels: &mut [usize]) {
    let n = inst.n;
    // s[i * clusters + c] = sum of d(i, j) over members j of c.
    let mut s = vec![T::zero(); n * clusters];
    let mut sizes = vec![0usize; clusters];
    for j in 0..n {
        sizes[labels[j]] += 1;
        for i in 0..n {
            s[i * clusters + labels[j]] += inst.dist(i, j);
        }
    }
    let max_passes = 1000;
    for _ in 0..max_passes {
        let mut moved = false;
        for i in 0..n {
            let a = labels[i];
            if sizes[a] == 1 {
                continue;
            }
            for b in 0..clusters {
                if b == a {
                    continue;
                }
                let delta = s[i * clusters + b] - s[i * clusters + a];
                if delta < T::zero() {
                    labels[i] = b;
                    sizes[a] -= 1;
                    sizes[b] += 1;
                    for k in 0..n {
                        let dk = inst.dist(k, i);
                        s[k * clusters + a] -= dk;
                        s[k * clusters + b] += dk;
                    }
                    moved = true;
                    break;
                }
            }
        }
        if !moved {
            break;
        }
    }
}

/// Multi-start local search. Starts grow farthest-first medoid sets from
/// the global medoid and from the next few farthest-first events; each start
/// is refined both directly and after medoid alternation. The lowest
/// objective wins, earliest start on ties. Returns the assignment and the
/// objective of the first start's seed.
pub fn solve_heuristic<T: Scalar>(
    inst: &ClusterInstance<T>,
    clusters: usize,
) -> (Assignment<T>, T) {
    let firsts = seed_medoids(inst, HEURISTIC_STARTS.min(inst.n));
    let mut seed_objective = None;
    let mut best: Option<(T, Vec<usize>)> = None;
    for &first in &firsts {
        let medoids = farthest_first(inst, clusters, first);
        let seed = nearest(inst, &medoids);
        let seed_cost = objective(inst, &seed);
        seed_objective.get_or_insert(seed_cost);
        let mut candidates = vec![(seed_cost, seed.clone())];
        for mut labels in [seed, refine_medoids(inst, medoids)] {
            local_search(inst, clusters, &mut labels);
            candidates.push((objective(inst, &labels), labels));
        }
        for (cost, labels) in candidates {
            if best.as_ref().is_none_or(|(b, _)| cost < *b) {
                best = Some((cost, labels));
            }
        }
    }
    let (_, labels) = best.expect("at least one start");
    (
        finish(inst, canonical(&labels)),
        seed_objective.expect("at least one start"),
    )
}

fn finish<T: Scalar>(inst: &ClusterInstance<T>, labels: Vec<usize>) -> Assignment<T> {
    Assignment {
        objective: objective(inst, &labels),
        clusters: labels.iter().max().map_or(0, |m| m + 1),
        labels,
    }
}

/// Evaluates the quadratic objective with products `u_ic * u_jc` and the
/// linearized objective with `t_ijc` implied by the linear constraints, and
/// fails unless they agree to 1e-12.
pub fn linearization_check<T: Scalar>(inst: &ClusterInstance<T>, u: &[Vec<bool>]) -> Result<T> {
    if u.len() != inst.n || u.iter().any(|r| r.iter().filter(|&&b| b).count() != 1) {
        return Err(Error::InvalidArgument(
            "assignment rows must each hold exactly one 1".into(),
        ));
    }
    let clusters = u[0].len();
    let bit = |b: bool| if b { 1i32 } else { 0 };
    let mut quadratic = T::zero();
    let mut linear = T::zero();
    for i in 0..inst.n {
        for j in 0..inst.n {
            for c in 0..clusters {
                let (ui, uj) = (bit(u[i][c]), bit(u[j][c]));
                quadratic += T::of(f64::from(ui * uj)) * inst.dist(i, j);
                // Smallest binary t with ui + uj - t <= 1 and 2t <= ui + uj.
                let t = (ui + uj - 1).max(0);
                if ui + uj - t > 1 || 2 * t > ui + uj {
                    return Err(Error::Consistency(format!(
                        "no feasible t for ({i}, {j}, {c})"
                    )));
                }
                linear += T::of(f64::from(t)) * inst.dist(i, j);
            }
        }
    }
    if (quadratic - linear).abs() > T::of(1e-12) {
        return Err(Error::Consistency(format!(
            "quadratic {quadratic} != linearized {linear}"
        )));
    }
    Ok(linear)
}

/// Per cluster, the event (any event, not only members) minimizing the summed
/// distance to the members; ties go to the lowest index.
pub fn select_representatives<T: Scalar>(
    inst: &ClusterInstance<T>,
    a: &Assignment<T>,
) -> Result<Vec<usize>> {
    (0..a.clusters)
        .map(|c| {
            let members = a.members(c);
            if members.is_empty() {
                return Err(Error::EmptyCluster(c));
            }
            let cost = |j: usize| members.iter().map(|&i| inst.dist(i, j)).sum::<T>();
            let mut best = 0;
            let mut best_cost = cost(0);
            for j in 1..inst.n {
                let v = cost(j);
                if v < best_cost {
                    best = j;
                    best_cost = v;
                }
            }
            Ok(best)
        })
        .collect()
}
