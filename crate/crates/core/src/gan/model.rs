use serde::{Deserialize, Serialize};

use super::network::{self, Architecture, InputTransform};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Scores are clamped into `(EPS_CLIP, 1 - EPS_CLIP)` and logs see the same floor.
pub const EPS_CLIP: f64 = 1e-6;

/// Floor for fitted standard deviations.
pub const EPS_NORM: f64 = 1e-9;

/// Generator objective actually descended during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorLoss {
    /// `-mean log D(G(z))`.
    #[default]
    NonSaturating,
    /// `mean log(1 - D(G(z)))`, the literal min-max form.
    Minimax,
}

impl GeneratorLoss {
    pub(crate) fn tag(self) -> u8 {
        match self {
            GeneratorLoss::NonSaturating => 0,
            GeneratorLoss::Minimax => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(GeneratorLoss::NonSaturating),
            1 => Some(GeneratorLoss::Minimax),
            _ => None,
        }
    }
}

/// How the normal score PDF is fitted to the training-window scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PdfFit {
    /// Sample mean and std over every training window.
    Moments,
    /// Mean and std of the scores within `k` std of the mean, iterated to a
    /// fixed point from a median/MAD start, so that event windows in the
    /// training data do not widen the band.
    Clipped { k: f64 },
}

impl Default for PdfFit {
    fn default() -> Self {
        PdfFit::Clipped { k: DEFAULT_CLIP_K }
    }
}

pub const DEFAULT_CLIP_K: f64 = 12.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Band half-width in standard deviations.
    pub z_p: f64,
    pub window_len: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub generator_loss: GeneratorLoss,
    pub noise_dim: usize,
    pub gen_hidden: usize,
    pub disc_hidden: usize,
    pub disc_input: InputTransform,
    /// Training windows are subsampled (evenly, in time order) down to this many.
    pub max_train_windows: usize,
    pub pdf_fit: PdfFit,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            z_p: 3.0,
            window_len: 40,
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 64,
            generator_loss: GeneratorLoss::NonSaturating,
            noise_dim: 8,
            gen_hidden: 32,
            disc_hidden: 32,
            disc_input: InputTransform::Center,
            max_train_windows: 512,
            pdf_fit: PdfFit::default(),
        }
    }
}

impl DetectorConfig {
    pub fn architecture(&self) -> Architecture {
        Architecture {
            window_len: self.window_len,
            noise_dim: self.noise_dim,
            gen_hidden: self.gen_hidden,
            disc_hidden: self.disc_hidden,
            disc_input: self.disc_input,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if !(self.z_p > 0.0) {
            return bad("detector.z_p must be > 0");
        }
        if self.window_len < 2 {
            return bad("detector.window_len must be >= 2");
        }
        if !(self.learning_rate > 0.0) {
            return bad("detector.learning_rate must be > 0");
        }
        if self.batch_size == 0 {
            return bad("detector.batch_size must be >= 1");
        }
        if self.noise_dim == 0 || self.gen_hidden == 0 || self.disc_hidden == 0 {
            return bad("detector layer sizes must be >= 1");
        }
        if self.max_train_windows < self.batch_size {
            return bad("detector.max_train_windows must be >= batch_size");
        }
        if let PdfFit::Clipped { k } = self.pdf_fit {
            if !(k >= 1.0) {
                return bad("detector.pdf_fit.k must be >= 1");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub mean: f64,
    pub std: f64,
    pub dim: usize,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            mean: 0.0,
            std: 1.0,
            dim: 8,
        }
    }
}

/// Normal fit of the discriminator scores over the training windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorePdf {
    pub mean: f64,
    pub std: f64,
}

impl ScorePdf {
    /// `true` when `score` lies outside the open band `mean ± z_p·std`.
    pub fn is_outside(&self, score: f64, z_p: f64) -> bool {
        let lo = self.mean - z_p * self.std;
        let hi = self.mean + z_p * self.std;
        !(score > lo && score < hi)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingMeta {
    pub trained: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub generator_loss: GeneratorLoss,
    /// Per-epoch mean of `log D(x) + log(1 - D(G(z)))`.
    pub disc_objective: Vec<f64>,
    /// Per-epoch mean of `log(1 - D(G(z)))`.
    pub gen_objective: Vec<f64>,
}

/// One feature's generator/discriminator pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GanModel<T> {
    /// Zero-based feature index into the nine-feature frame.
    pub feature: usize,
    pub arch: Architecture,
    pub noise: NoiseSpec,
    pub generator: Vec<T>,
    pub discriminator: Vec<T>,
    pub meta: TrainingMeta,
}

impl<T: Scalar> GanModel<T> {
    pub fn zeroed(feature: usize, arch: Architecture) -> Self {
        Self {
            feature,
            arch,
            noise: NoiseSpec {
                dim: arch.noise_dim,
                ..NoiseSpec::default()
            },
            generator: vec![T::zero(); arch.gen_len()],
            discriminator: vec![T::zero(); arch.disc_len()],
            meta: TrainingMeta::default(),
        }
    }

    pub fn check_shapes(&self) -> Result<()> {
        if self.generator.len() != self.arch.gen_len()
            || self.discriminator.len() != self.arch.disc_len()
        {
            return Err(Error::Shape {
                expected: format!(
                    "{}+{} parameters",
                    self.arch.gen_len(),
                    self.arch.disc_len()
                ),
                got: format!("{}+{}", self.generator.len(), self.discriminator.len()),
            });
        }
        if self.noise.dim != self.arch.noise_dim {
            return Err(Error::Shape {
                expected: format!("noise dim {}", self.arch.noise_dim),
                got: format!("{}", self.noise.dim),
            });
        }
        Ok(())
    }

    /// Generates one window from a step-major noise sequence of
    /// `window_len * noise_dim` values.
    pub fn generate(&self, noise: &[T]) -> Result<Vec<T>> {
        let expected = self.arch.window_len * self.arch.noise_dim;
        if noise.len() != expected {
            return Err(Error::Shape {
                expected: format!("{expected} noise values"),
                got: noise.len().to_string(),
            });
        }
        Ok(network::generator_forward(&self.arch, &self.generator, noise, 1).out)
    }

    /// Discriminator score of one standardized window.
    pub fn score(&self, window: &[T]) -> Result<T> {
        Ok(self.score_batch(&[window])?[0])
    }

    pub fn score_batch(&self, windows: &[&[T]]) -> Result<Vec<T>> {
        let len = self.arch.window_len;
        for w in windows {
            if w.len() != len {
                return Err(Error::Shape {
                    expected: format!("window of {len}"),
                    got: w.len().to_string(),
                });
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "window for feature {}",
                    self.feature
                )));
            }
        }
        let mut scores = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(64) {
            let x = network::to_time_major(chunk, len);
            let pass =
                network::discriminator_forward(&self.arch, &self.discriminator, &x, chunk.len());
            scores.extend(pass.logits.into_iter().map(clip_sigmoid));
        }
        Ok(scores)
    }
}

/// `sigmoid(logit)` clamped into `(EPS_CLIP, 1 - EPS_CLIP)`.
pub fn clip_sigmoid<T: Scalar>(logit: T) -> T {
    let eps = T::of(EPS_CLIP);
    super::lstm::sigmoid(logit).max(eps).min(T::one() - eps)
}
