//! Rolling maximum correlation coefficient between events and per-category
//! similarity matrices.

pub mod matrix;
pub mod mcc;

pub use matrix::{
    build_similarity_matrix, cache_key, scale_from_std, SimilarityCache, SimilarityMatrix,
};
pub use mcc::{
    mcc, mcc_naive, step_correlation, AlignedPair, Correlator, EventMatrix, MccConfig, RowFilter,
    EPS_VAR,
};
