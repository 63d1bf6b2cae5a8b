use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One sinusoidal drift term shared by a feature group. Amplitudes are
/// relative to nominal for |V| and |I| and absolute for cosθ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Drift {
    pub period_s: f64,
    pub v: f64,
    pub i: f64,
    pub pf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub v_nominal: f64,
    pub i_nominal: [f64; 3],
    pub pf_nominal: f64,
    /// Gaussian sensor noise as a fraction of each channel's level.
    pub noise_rel: f64,
    pub drift: Vec<Drift>,
    /// Offset of the system frequency from nominal; rotates all phasor angles.
    pub freq_offset_hz: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            v_nominal: 7200.0,
            i_nominal: [38.0, 40.0, 42.0],
            pf_nominal: 0.95,
            noise_rel: 5e-4,
            drift: vec![
                Drift {
                    period_s: 12.0,
                    v: 0.006,
                    i: 0.01,
                    pf: 0.007,
                },
                Drift {
                    period_s: 45.0,
                    v: 0.004,
                    i: 0.02,
                    pf: 0.005,
                },
                Drift {
                    period_s: 170.0,
                    v: 0.004,
                    i: 0.03,
                    pf: 0.005,
                },
                Drift {
                    period_s: 900.0,
                    v: 0.006,
                    i: 0.05,
                    pf: 0.01,
                },
            ],
            freq_offset_hz: 0.02,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        let levels = [
            self.v_nominal,
            self.i_nominal[0],
            self.i_nominal[1],
            self.i_nominal[2],
        ];
        if levels.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            return Err(Error::Config("nominal magnitudes must be positive".into()));
        }
        if !(self.pf_nominal > 0.0 && self.pf_nominal <= 1.0) {
            return Err(Error::Config(format!(
                "pf_nominal {} outside (0, 1]",
                self.pf_nominal
            )));
        }
        if !(self.noise_rel >= 0.0 && self.noise_rel.is_finite()) {
            return Err(Error::Config("noise_rel must be non-negative".into()));
        }
        if self.drift.iter().any(|d| !(d.period_s > 0.0)) {
            return Err(Error::Config("drift periods must be positive".into()));
        }
        Ok(())
    }

    pub fn i_mean(&self) -> f64 {
        self.i_nominal.iter().sum::<f64>() / 3.0
    }
}

/// Fixed random phases of every drift term, per group and phase.
#[derive(Debug, Clone)]
pub(crate) struct DriftPhases {
    /// `[group][phase][term]`
    phases: [[Vec<f64>; 3]; 3],
}

impl DriftPhases {
    pub(crate) fn draw<R: Rng>(cfg: &BaselineConfig, rng: &mut R) -> Self {
        let mut draw = || -> [Vec<f64>; 3] {
            std::array::from_fn(|_| {
                cfg.drift
                    .iter()
                    .map(|_| rng.random_range(0.0..TAU))
                    .collect()
            })
        };
        Self {
            phases: [draw(), draw(), draw()],
        }
    }

    /// Noise-free steady state at time `t` seconds: `(|V|, |I|, cosθ)` per phase.
    pub(crate) fn level(&self, cfg: &BaselineConfig, t: f64) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for p in 0..3 {
            let mut s = [0.0; 3];
            for (k, d) in cfg.drift.iter().enumerate() {
                let w = TAU * t / d.period_s;
                s[0] += d.v * (w + self.phases[0][p][k]).sin();
                s[1] += d.i * (w + self.phases[1][p][k]).sin();
                s[2] += d.pf * (w + self.phases[2][p][k]).sin();
            }
            out[0][p] = cfg.v_nominal * (1.0 + s[0]);
            out[1][p] = cfg.i_nominal[p] * (1.0 + s[1]);
            out[2][p] = cfg.pf_nominal + s[2];
        }
        out
    }
}
