use serde::{Deserialize, Serialize};

use super::solve::{solve_auto, Assignment, ClusterInstance};
use crate::error::Result;
use crate::scalar::Scalar;

pub const DEFAULT_C_MAX: usize = 8;
pub const DEFAULT_S_MIN: f64 = 0.25;

/// Per-event silhouette `(b - a) / max(a, b)`; 0 for singletons and for
/// events with `a = b = 0`.
pub fn silhouettes<T: Scalar>(inst: &ClusterInstance<T>, labels: &[usize]) -> Vec<T> {
    let clusters = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; clusters];
    for &l in labels {
        sizes[l] += 1;
    }
    (0..inst.n)
        .map(|i| {
            let own = labels[i];
            if sizes[own] <= 1 || clusters < 2 {
                return T::zero();
            }
            let mut sums = vec![T::zero(); clusters];
            for j in 0..inst.n {
                sums[labels[j]] += inst.dist(i, j);
            }
            let a = sums[own] / T::of((sizes[own] - 1) as f64);
            let b = (0..clusters)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / T::of(sizes[c] as f64))
                .fold(T::infinity(), T::min);
            let m = a.max(b);
            if m > T::zero() && b.is_finite() {
                ((b - a) / m).max(-T::one()).min(T::one())
            } else {
                T::zero()
            }
        })
        .collect()
}

pub fn mean_silhouette<T: Scalar>(inst: &ClusterInstance<T>, labels: &[usize]) -> T {
    let s = silhouettes(inst, labels);
    s.iter().copied().sum::<T>() / T::of(s.len().max(1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountSelection<T> {
    pub chosen: usize,
    /// `(C, mean silhouette)` for every count tried.
    pub scores: Vec<(usize, T)>,
    #[serde(skip)]
    pub assignment: Option<Assignment<T>>,
}

/// Solves for every count in `2..=c_max` and keeps the best mean silhouette
/// (lowest count on ties); falls back to a single cluster when no count
/// reaches `s_min` or there are fewer than two events.
pub fn select_cluster_count<T: Scalar>(
    inst: &ClusterInstance<T>,
    c_max: usize,
    s_min: f64,
    exact_cap: usize,
) -> Result<CountSelection<T>> {
    let single = |scores| CountSelection {
        chosen: 1,
        scores,
        assignment: Some(Assignment {
            labels: vec![0; inst.n],
            clusters: 1,
            objective: super::solve::objective(inst, &vec![0; inst.n]),
        }),
    };
    if inst.n < 2 {
        return Ok(single(Vec::new()));
    }
    let mut scores = Vec::new();
    let mut best: Option<(T, Assignment<T>)> = None;
    for c in 2..=c_max.min(inst.n) {
        let a = solve_auto(inst, c, exact_cap)?;
        let s = mean_silhouette(inst, &a.labels);
        scores.push((c, s));
        if best.as_ref().is_none_or(|(bs, _)| s > *bs) {
            best = Some((s, a));
        }
    }
    match best {
        Some((s, a)) if s >= T::of(s_min) => Ok(CountSelection {
            chosen: a.clusters,
            scores,
            assignment: Some(a),
        }),
        _ => Ok(single(scores)),
    }
}
