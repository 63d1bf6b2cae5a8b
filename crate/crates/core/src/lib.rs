pub(crate) mod binio;
pub mod cluster;
pub mod error;
pub mod events;
pub mod gan;
pub mod ingest;
pub mod pipeline;
pub mod report;
pub mod scalar;
pub mod similarity;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// GAN detectors run in single precision.
pub type DetectorBank32 = gan::DetectorBank<f32>;
pub type GanModel32 = gan::GanModel<f32>;
/// Similarity and clustering run in double precision.
pub type EventMatrix64 = similarity::EventMatrix<f64>;
pub type SimilarityMatrix64 = similarity::SimilarityMatrix<f64>;
pub type ClusterInstance64 = cluster::ClusterInstance<f64>;
pub type Assignment64 = cluster::Assignment<f64>;
