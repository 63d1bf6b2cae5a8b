//! Learning-phase score fitting and detection-phase flagging.

use rayon::prelude::*;

use super::model::{DetectorConfig, GanModel, NoiseSpec, PdfFit, ScorePdf, EPS_NORM};
use super::train::train_gan;
use crate::error::{Error, Result};
use crate::ingest::{Window, FEATURE_COUNT};
use crate::scalar::{mean_std, Scalar};

/// Minimum number of training windows for a score fit.
pub const MIN_PDF_WINDOWS: usize = 30;

pub fn fit_score_pdf<T: Scalar>(
    model: &GanModel<T>,
    windows: &[&[T]],
    fit: PdfFit,
) -> Result<ScorePdf> {
    if !model.meta.trained {
        return Err(Error::Untrained);
    }
    if windows.len() < MIN_PDF_WINDOWS {
        return Err(Error::InsufficientData(format!(
            "{} windows for score fit, need {MIN_PDF_WINDOWS}",
            windows.len()
        )));
    }
    let scores: Vec<f64> = model
        .score_batch(windows)?
        .into_iter()
        .map(Scalar::as_f64)
        .collect();
    Ok(match fit {
        PdfFit::Moments => pdf_from_scores(&scores),
        PdfFit::Clipped { k } => pdf_clipped(&scores, k),
    })
}

/// Population mean/std of `scores`, std floored at [`EPS_NORM`].
pub fn pdf_from_scores(scores: &[f64]) -> ScorePdf {
    let (mean, std) = mean_std(scores);
    ScorePdf {
        mean,
        std: std.max(EPS_NORM),
    }
}

/// Iterative `k`-sigma clipping started from the median and the MAD scale:
/// mean and std are refitted on the scores within `k` std of the previous
/// mean until the kept set stops changing. The robust start keeps a large
/// fraction of far outliers from pulling the fit to a wide fixed point.
pub fn pdf_clipped(scores: &[f64], k: f64) -> ScorePdf {
    const MAX_ROUNDS: usize = 200;
    if scores.len() < 2 {
        return pdf_from_scores(scores);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let center = median_sorted(&sorted);
    let mut dev: Vec<f64> = sorted.iter().map(|s| (s - center).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let mut pdf = ScorePdf {
        mean: center,
        std: (MAD_TO_STD * median_sorted(&dev)).max(EPS_NORM),
    };
    let mut kept: Vec<bool> = Vec::new();
    for _ in 0..MAX_ROUNDS {
        let next: Vec<bool> = scores
            .iter()
            .map(|&s| (s - pdf.mean).abs() <= k * pdf.std)
            .collect();
        if next == kept {
            break;
        }
        let inside: Vec<f64> = scores
            .iter()
            .zip(&next)
            .filter(|(_, &b)| b)
            .map(|(&s, _)| s)
            .collect();
        if inside.len() < 2 {
            break;
        }
        pdf = pdf_from_scores(&inside);
        kept = next;
    }
    pdf
}

/// Ratio of the standard deviation to the median absolute deviation of a normal distribution.
const MAD_TO_STD: f64 = 1.482_602_218_505_602;

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Score of one feature row and whether it falls outside the band.
pub fn score_window<T: Scalar>(
    model: &GanModel<T>,
    pdf: &ScorePdf,
    row: &[T],
    z_p: f64,
) -> Result<(f64, bool)> {
    let s = model.score(row)?.as_f64();
    Ok((s, pdf.is_outside(s, z_p)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDetector<T> {
    pub model: GanModel<T>,
    pub pdf: ScorePdf,
}

/// Per-window scores and flags across all nine features.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowScores {
    pub window: usize,
    pub scores: [f64; FEATURE_COUNT],
    pub flags: [bool; FEATURE_COUNT],
}

/// Nine independent detectors, one per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorBank<T> {
    pub detectors: Vec<FeatureDetector<T>>,
    pub z_p: f64,
}

fn feature_rows<T: Scalar>(windows: &[Window], feature: usize) -> Vec<Vec<T>> {
    windows
        .iter()
        .map(|w| w.row(feature).iter().map(|&v| T::of(v)).collect())
        .collect()
}

/// Evenly spaced subsample preserving time order.
pub fn subsample<W>(items: &[W], max: usize) -> Vec<&W> {
    if items.len() <= max {
        return items.iter().collect();
    }
    (0..max).map(|k| &items[k * items.len() / max]).collect()
}

impl<T: Scalar> DetectorBank<T> {
    /// Trains all nine GANs and fits their score PDFs on `windows`.
    /// Models are independent and train in parallel on the current rayon pool.
    pub fn train(windows: &[Window], config: &DetectorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let train_set: Vec<Window> = subsample(windows, config.max_train_windows)
            .into_iter()
            .cloned()
            .collect();
        let noise = NoiseSpec {
            dim: config.noise_dim,
            ..NoiseSpec::default()
        };
        let detectors = (0..FEATURE_COUNT)
            .into_par_iter()
            .map(|f| {
                let rows = feature_rows::<T>(&train_set, f);
                let refs: Vec<&[T]> = rows.iter().map(Vec::as_slice).collect();
                let model = train_gan(f, &refs, config, &noise, seed)?;
                // Score fit over the full training period, not only the subsample.
                let all = feature_rows::<T>(windows, f);
                let all_refs: Vec<&[T]> = all.iter().map(Vec::as_slice).collect();
                let pdf = fit_score_pdf(&model, &all_refs, config.pdf_fit)?;
                log::info!(
                    "feature {f}: trained {} epochs, score pdf mean {:.6} std {:.3e}",
                    config.epochs,
                    pdf.mean,
                    pdf.std
                );
                Ok(FeatureDetector { model, pdf })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            detectors,
            z_p: config.z_p,
        })
    }

    pub fn score_windows(&self, windows: &[Window]) -> Result<Vec<WindowScores>> {
        if self.detectors.len() != FEATURE_COUNT {
            return Err(Error::Shape {
                expected: format!("{FEATURE_COUNT} detectors"),
                got: self.detectors.len().to_string(),
            });
        }
        let per_feature: Vec<Vec<f64>> = self
            .detectors
            .par_iter()
            .enumerate()
            .map(|(f, det)| {
                let rows = feature_rows::<T>(windows, f);
                let refs: Vec<&[T]> = rows.iter().map(Vec::as_slice).collect();
                Ok(det
                    .model
                    .score_batch(&refs)?
                    .into_iter()
                    .map(Scalar::as_f64)
                    .collect())
            })
            .collect::<Result<_>>()?;
        Ok(windows
            .iter()
            .enumerate()
            .map(|(k, w)| {
                let mut scores = [0.0; FEATURE_COUNT];
                let mut flags = [false; FEATURE_COUNT];
                for f in 0..FEATURE_COUNT {
                    scores[f] = per_feature[f][k];
                    flags[f] = self.detectors[f].pdf.is_outside(scores[f], self.z_p);
                }
                WindowScores {
                    window: w.index,
                    scores,
                    flags,
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moment_fit_oracles() {
        let p = pdf_from_scores(&[0.5; 40]);
        assert_eq!((p.mean, p.std), (0.5, EPS_NORM));
        let p = pdf_from_scores(&[0.4, 0.6]);
        assert!((p.mean - 0.5).abs() < 1e-15 && (p.std - 0.1).abs() < 1e-15);
    }

    #[test]
    fn clipping_ignores_outliers_only() {
        assert_eq!(pdf_clipped(&[0.4, 0.6], 4.0), pdf_from_scores(&[0.4, 0.6]));
        assert_eq!(pdf_clipped(&[0.5; 40], 4.0).std, EPS_NORM);
        let core: Vec<f64> = (0..1000)
            .map(|k| 0.5 + 1e-3 * (((k * 37) % 101) as f64 / 50.0 - 1.0))
            .collect();
        let mut dirty = core.clone();
        dirty.extend([0.9, 0.1, 0.95, 0.7]);
        let clean = pdf_from_scores(&core);
        let fit = pdf_clipped(&dirty, 4.0);
        assert!(pdf_from_scores(&dirty).std > 20.0 * clean.std);
        assert_eq!(fit, clean);
    }

    #[test]
    fn robust_start_ignores_a_large_far_cluster() {
        let core: Vec<f64> = (0..800)
            .map(|k| 0.5 + 1e-4 * (((k * 37) % 101) as f64 / 50.0 - 1.0))
            .collect();
        let mut dirty = core.clone();
        dirty.extend((0..200).map(|k| 0.2 + 1e-3 * (k % 7) as f64));
        // A full-sample start would keep the far cluster at this width.
        let full = pdf_from_scores(&dirty);
        assert!(dirty
            .iter()
            .all(|s| (s - full.mean).abs() <= 12.0 * full.std));
        assert_eq!(pdf_clipped(&dirty, 12.0), pdf_from_scores(&core));
    }

    #[test]
    fn band_edges() {
        let p = ScorePdf {
            mean: 0.5,
            std: 0.01,
        };
        assert!(!p.is_outside(0.5, 3.0));
        assert!(p.is_outside(0.5 + 3.01 * 0.01, 3.0));
        assert!(p.is_outside(0.5 - 3.01 * 0.01, 3.0));
    }
}
