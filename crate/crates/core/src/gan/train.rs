//! Alternating discriminator/generator updates.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::adam::Adam;
use super::model::{DetectorConfig, GanModel, GeneratorLoss, NoiseSpec, TrainingMeta, EPS_CLIP};
use super::network::{self, Architecture};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Objective value plus the gradient of the loss being descended.
#[derive(Debug, Clone)]
pub struct StepGradients<T> {
    pub objective: f64,
    pub grads: Vec<T>,
}

/// `(log D, d log D / d logit, log(1-D), d log(1-D) / d logit)` for a clipped sigmoid.
/// The derivatives vanish where the clip is active.
fn log_terms(logit: f64) -> (f64, f64, f64, f64) {
    let p = 1.0 / (1.0 + (-logit).exp());
    let inside = p > EPS_CLIP && p < 1.0 - EPS_CLIP;
    let d = p.clamp(EPS_CLIP, 1.0 - EPS_CLIP);
    let (dl, dl1) = if inside { (1.0 - p, -p) } else { (0.0, 0.0) };
    (d.ln(), dl, (1.0 - d).ln(), dl1)
}

/// Discriminator objective `mean[log D(x) + log(1 - D(G(z)))]` on one batch, and
/// the gradient of its negation with respect to the discriminator parameters.
///
/// `real` is time-major `window_len x batch`; `noise` is time-major
/// `window_len x batch x noise_dim`.
pub fn discriminator_gradients<T: Scalar>(
    arch: &Architecture,
    generator: &[T],
    discriminator: &[T],
    real: &[T],
    noise: &[T],
    batch: usize,
) -> StepGradients<T> {
    let fake = network::generator_forward(arch, generator, noise, batch).out;
    let pr = network::discriminator_forward(arch, discriminator, real, batch);
    let pf = network::discriminator_forward(arch, discriminator, &fake, batch);
    let n = batch as f64;
    let mut objective = 0.0;
    let mut d_real = Vec::with_capacity(batch);
    let mut d_fake = Vec::with_capacity(batch);
    for (&lr, &lf) in pr.logits.iter().zip(&pf.logits) {
        let (log_d, dlog_d, _, _) = log_terms(lr.as_f64());
        let (_, _, log_1d, dlog_1d) = log_terms(lf.as_f64());
        objective += log_d + log_1d;
        d_real.push(T::of(-dlog_d / n));
        d_fake.push(T::of(-dlog_1d / n));
    }
    let mut grads = vec![T::zero(); discriminator.len()];
    network::discriminator_backward(arch, discriminator, &pr, &d_real, &mut grads);
    network::discriminator_backward(arch, discriminator, &pf, &d_fake, &mut grads);
    StepGradients {
        objective: objective / n,
        grads,
    }
}

/// Generator step on one batch.
#[derive(Debug, Clone)]
pub struct GeneratorStep<T> {
    /// Loss being descended under the selected [`GeneratorLoss`].
    pub loss: f64,
    /// `mean log(1 - D(G(z)))` regardless of mode.
    pub minimax_objective: f64,
    pub grads: Vec<T>,
}

/// Generator loss on one batch and its gradient with respect to the generator
/// parameters. For [`GeneratorLoss::Minimax`] the loss is
/// `mean log(1 - D(G(z)))`; for the non-saturating form it is `-mean log D(G(z))`.
pub fn generator_gradients<T: Scalar>(
    arch: &Architecture,
    generator: &[T],
    discriminator: &[T],
    noise: &[T],
    batch: usize,
    loss: GeneratorLoss,
) -> GeneratorStep<T> {
    let gp = network::generator_forward(arch, generator, noise, batch);
    let dp = network::discriminator_forward(arch, discriminator, &gp.out, batch);
    let n = batch as f64;
    let (mut total, mut minimax) = (0.0, 0.0);
    let d_logits: Vec<T> = dp
        .logits
        .iter()
        .map(|&l| {
            let (log_d, dlog_d, log_1d, dlog_1d) = log_terms(l.as_f64());
            minimax += log_1d;
            match loss {
                GeneratorLoss::Minimax => {
                    total += log_1d;
                    T::of(dlog_1d / n)
                }
                GeneratorLoss::NonSaturating => {
                    total -= log_d;
                    T::of(-dlog_d / n)
                }
            }
        })
        .collect();
    let mut scratch = vec![T::zero(); discriminator.len()];
    let d_fake = network::discriminator_backward(arch, discriminator, &dp, &d_logits, &mut scratch);
    let mut grads = vec![T::zero(); generator.len()];
    network::generator_backward(arch, generator, &gp, &d_fake, &mut grads);
    GeneratorStep {
        loss: total / n,
        minimax_objective: minimax / n,
        grads,
    }
}

/// Time-major noise block `window_len x batch x dim`.
pub fn sample_noise<T: Scalar, R: Rng>(
    rng: &mut R,
    spec: &NoiseSpec,
    window_len: usize,
    batch: usize,
) -> Vec<T> {
    (0..window_len * batch * spec.dim)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            T::of(spec.mean + spec.std * z)
        })
        .collect()
}

/// Per-feature RNG seed.
pub fn feature_seed(seed: u64, feature: usize) -> u64 {
    seed ^ (feature as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Trains one GAN on the standardized windows of a single feature.
pub fn train_gan<T: Scalar>(
    feature: usize,
    windows: &[&[T]],
    config: &DetectorConfig,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<GanModel<T>> {
    config.validate()?;
    let arch = config.architecture();
    if noise.dim != arch.noise_dim {
        return Err(Error::Shape {
            expected: format!("noise dim {}", arch.noise_dim),
            got: noise.dim.to_string(),
        });
    }
    if !(noise.std > 0.0) {
        return Err(Error::InvalidArgument("noise std must be > 0".into()));
    }
    let batch = config.batch_size;
    if windows.len() < batch {
        return Err(Error::InsufficientData(format!(
            "{} windows for batch size {batch}",
            windows.len()
        )));
    }
    if let Some(w) = windows.iter().find(|w| w.len() != arch.window_len) {
        return Err(Error::Shape {
            expected: format!("window of {}", arch.window_len),
            got: w.len().to_string(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(feature_seed(seed, feature));
    let (mut generator, mut discriminator) = arch.init_params::<T, _>(&mut rng);
    let mut opt_g = Adam::<T>::with_betas(generator.len(), config.learning_rate, 0.5, 0.999);
    let mut opt_d = Adam::<T>::with_betas(discriminator.len(), config.learning_rate, 0.5, 0.999);

    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut disc_curve = Vec::with_capacity(config.epochs);
    let mut gen_curve = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut d_sum, mut g_sum, mut batches) = (0.0, 0.0, 0usize);
        for idx in order.chunks_exact(batch) {
            let rows: Vec<&[T]> = idx.iter().map(|&i| windows[i]).collect();
            let real = network::to_time_major(&rows, arch.window_len);

            let z = sample_noise::<T, _>(&mut rng, noise, arch.window_len, batch);
            let d = discriminator_gradients(&arch, &generator, &discriminator, &real, &z, batch);
            opt_d.step(&mut discriminator, &d.grads);

            let z = sample_noise::<T, _>(&mut rng, noise, arch.window_len, batch);
            let g = generator_gradients(
                &arch,
                &generator,
                &discriminator,
                &z,
                batch,
                config.generator_loss,
            );
            opt_g.step(&mut generator, &g.grads);

            d_sum += d.objective;
            g_sum += g.minimax_objective;
            batches += 1;
        }
        let d_mean = d_sum / batches as f64;
        let g_mean = g_sum / batches as f64;
        let finite_params = generator
            .iter()
            .chain(&discriminator)
            .all(|v| v.is_finite());
        if !d_mean.is_finite() || !g_mean.is_finite() || !finite_params {
            return Err(Error::Divergence { epoch });
        }
        disc_curve.push(d_mean);
        gen_curve.push(g_mean);
        log::debug!("feature {feature} epoch {epoch}: D {d_mean:.5} G {g_mean:.5}");
    }

    Ok(GanModel {
        feature,
        arch,
        noise: *noise,
        generator,
        discriminator,
        meta: TrainingMeta {
            trained: true,
            epochs: config.epochs,
            batch_size: batch,
            seed,
            learning_rate: config.learning_rate,
            generator_loss: config.generator_loss,
            disc_objective: disc_curve,
            gen_objective: gen_curve,
        },
    })
}
