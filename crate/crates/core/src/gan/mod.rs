//! Per-feature GAN anomaly detectors.

pub mod adam;
pub mod io;
pub mod lstm;
pub mod model;
pub mod network;
pub mod score;
pub mod train;

pub use model::{
    DetectorConfig, GanModel, GeneratorLoss, NoiseSpec, PdfFit, ScorePdf, TrainingMeta,
    DEFAULT_CLIP_K, EPS_CLIP, EPS_NORM,
};
pub use network::{Architecture, InputTransform};
pub use score::{
    fit_score_pdf, pdf_clipped, pdf_from_scores, score_window, DetectorBank, FeatureDetector,
    WindowScores,
};
pub use train::train_gan;
