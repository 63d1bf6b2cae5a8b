//! Versioned binary model files, one per feature.
//!
//! Layout (little-endian): magic `GSGM`, version, scalar width, feature index,
//! architecture, noise spec, training metadata with loss curves, generator and
//! discriminator parameter blobs, score PDF, then the `z_p` the model was
//! trained for.

use std::path::{Path, PathBuf};

use super::model::{GanModel, GeneratorLoss, NoiseSpec, ScorePdf, TrainingMeta};
use super::network::{Architecture, InputTransform};
use super::score::{DetectorBank, FeatureDetector};
use crate::binio::{read_file, write_file, Reader, Writer};
use crate::error::{Error, Result};
use crate::ingest::FEATURE_COUNT;
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"GSGM";
pub const VERSION: u32 = 1;
const MAX_BLOB: usize = 1 << 26;

pub fn encode<T: Scalar>(det: &FeatureDetector<T>, z_p: f64) -> Vec<u8> {
    let m = &det.model;
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u8(T::WIDTH);
    w.u32(m.feature as u32);
    for v in [
        m.arch.window_len,
        m.arch.noise_dim,
        m.arch.gen_hidden,
        m.arch.disc_hidden,
    ] {
        w.u32(v as u32);
    }
    w.u8(m.arch.disc_input.tag());
    w.f64(m.noise.mean);
    w.f64(m.noise.std);
    w.u32(m.noise.dim as u32);
    w.u8(m.meta.trained as u8);
    w.u32(m.meta.epochs as u32);
    w.u32(m.meta.batch_size as u32);
    w.u64(m.meta.seed);
    w.f64(m.meta.learning_rate);
    w.u8(m.meta.generator_loss.tag());
    w.f64s(&m.meta.disc_objective);
    w.f64s(&m.meta.gen_objective);
    w.scalars(&m.generator);
    w.scalars(&m.discriminator);
    w.f64(det.pdf.mean);
    w.f64(det.pdf.std);
    w.f64(z_p);
    w.buf
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<(FeatureDetector<T>, f64)> {
    let mut r = Reader::new(bytes);
    r.expect_magic(MAGIC)?;
    r.expect_version(VERSION)?;
    let width = r.u8()?;
    if width != T::WIDTH {
        return Err(Error::Corrupt(format!(
            "scalar width {width} bytes, reader expects {}",
            T::WIDTH
        )));
    }
    let feature = r.u32()? as usize;
    if feature >= FEATURE_COUNT {
        return Err(Error::Corrupt(format!("feature index {feature}")));
    }
    let arch = Architecture {
        window_len: r.u32()? as usize,
        noise_dim: r.u32()? as usize,
        gen_hidden: r.u32()? as usize,
        disc_hidden: r.u32()? as usize,
        disc_input: {
            let tag = r.u8()?;
            InputTransform::from_tag(tag)
                .ok_or_else(|| Error::Corrupt(format!("input transform tag {tag}")))?
        },
    };
    let noise = NoiseSpec {
        mean: r.f64()?,
        std: r.f64()?,
        dim: r.u32()? as usize,
    };
    let trained = r.u8()? != 0;
    let epochs = r.u32()? as usize;
    let batch_size = r.u32()? as usize;
    let seed = r.u64()?;
    let learning_rate = r.f64()?;
    let tag = r.u8()?;
    let generator_loss = GeneratorLoss::from_tag(tag)
        .ok_or_else(|| Error::Corrupt(format!("generator loss tag {tag}")))?;
    let disc_objective = r.f64s(MAX_BLOB)?;
    let gen_objective = r.f64s(MAX_BLOB)?;
    let generator = r.scalars::<T>(MAX_BLOB)?;
    let discriminator = r.scalars::<T>(MAX_BLOB)?;
    let pdf = ScorePdf {
        mean: r.f64()?,
        std: r.f64()?,
    };
    let z_p = r.f64()?;
    r.finish()?;
    let model = GanModel {
        feature,
        arch,
        noise,
        generator,
        discriminator,
        meta: TrainingMeta {
            trained,
            epochs,
            batch_size,
            seed,
            learning_rate,
            generator_loss,
            disc_objective,
            gen_objective,
        },
    };
    model
        .check_shapes()
        .map_err(|e| Error::Corrupt(e.to_string()))?;
    if model
        .generator
        .iter()
        .chain(&model.discriminator)
        .any(|v| !v.is_finite())
    {
        return Err(Error::Corrupt("non-finite parameters".into()));
    }
    Ok((FeatureDetector { model, pdf }, z_p))
}

pub fn save_model<T: Scalar>(path: &Path, det: &FeatureDetector<T>, z_p: f64) -> Result<()> {
    write_file(path, &encode(det, z_p))
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<(FeatureDetector<T>, f64)> {
    decode(&read_file(path)?)
}

pub fn model_path(dir: &Path, feature: usize) -> PathBuf {
    dir.join(format!("feature_{feature}.gsm"))
}

pub fn save_bank<T: Scalar>(dir: &Path, bank: &DetectorBank<T>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for det in &bank.detectors {
        save_model(&model_path(dir, det.model.feature), det, bank.z_p)?;
    }
    Ok(())
}

/// Loads all nine models. `z_p` comes from the files unless overridden.
pub fn load_bank<T: Scalar>(dir: &Path, z_p: Option<f64>) -> Result<DetectorBank<T>> {
    let mut detectors = Vec::with_capacity(FEATURE_COUNT);
    let mut stored = None;
    for f in 0..FEATURE_COUNT {
        let (det, zp) = load_model::<T>(&model_path(dir, f))?;
        if det.model.feature != f {
            return Err(Error::Corrupt(format!(
                "file for feature {f} holds feature {}",
                det.model.feature
            )));
        }
        stored.get_or_insert(zp);
        detectors.push(det);
    }
    Ok(DetectorBank {
        detectors,
        z_p: z_p.or(stored).unwrap_or(3.0),
    })
}
