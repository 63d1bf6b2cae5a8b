//! Exact and heuristic clustering on `1 - MCC` distances, representatives,
//! silhouette-based cluster counts and active clustering of new events.

pub mod model;
pub mod silhouette;
pub mod solve;

pub use model::{
    fit_category, reoptimize, Cluster, ClusterModel, ClusterParams, Match, ModelFile, PoolEvent,
    SolveInfo, DEFAULT_I_MAX, DEFAULT_THETA_ACTIVE, MODEL_VERSION,
};
pub use silhouette::{
    mean_silhouette, select_cluster_count, silhouettes, CountSelection, DEFAULT_C_MAX,
    DEFAULT_S_MIN,
};
pub use solve::{
    canonical, linearization_check, objective, seed_medoids, select_representatives, solve_auto,
    solve_clustering, solve_heuristic, Assignment, ClusterInstance, SolveMode, DEFAULT_EXACT_CAP,
    HEURISTIC_STARTS,
};
