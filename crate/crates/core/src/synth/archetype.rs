//! The sixteen event signatures as phenomenological templates.
//!
//! Every template is a deterministic function of sample offset `u` since
//! onset. Inside the labeled span it returns the full perturbation; after the
//! span only the steady-state offset remains, which the stream renderer
//! relaxes back to zero slowly enough to look like ordinary load drift.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::events::DetectionVector;
use crate::ingest::FEATURE_COUNT;

pub const ARCHETYPE_COUNT: u8 = 16;

/// Oscillation after a step change (#6).
pub const OSC_FREQ_HZ: f64 = 5.2;
pub const OSC_DAMPING: f64 = 0.0297;
pub const OSC_PF_SWING: f64 = 0.4;

/// Transient decay constant of the inrush pinnacle, in samples.
const INRUSH_TAU: f64 = 1.8;

/// How the plant schedule repeats a signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recurrence {
    Random,
    /// Part of a weekly super-event sequence.
    Weekly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureSpec {
    pub archetype: u8,
    pub name: String,
    /// Pre-processing category, 1..=5.
    pub category: u8,
    pub mask: DetectionVector,
    /// Range of the per-event amplitude multiplier.
    pub gain: (f64, f64),
    /// Range of the labeled span in samples.
    pub duration: (usize, usize),
    pub recurrence: Recurrence,
}

const NAMES: [&str; 16] = [
    "inrush",
    "plateau",
    "capacitor_on",
    "capacitor_off",
    "two_step_load",
    "step_oscillation",
    "tap_change",
    "voltage_plateau",
    "voltage_ripple",
    "current_pulse",
    "unbalanced_a",
    "unbalanced_ab",
    "unbalanced_bc",
    "pf_oscillation",
    "pf_dip_ab",
    "pf_step_bc",
];

const MASKS: [&str; 16] = [
    "111 111 111",
    "111 111 111",
    "111 111 111",
    "111 111 111",
    "111 111 111",
    "111 111 111",
    "111 000 000",
    "111 000 000",
    "111 000 000",
    "000 111 111",
    "000 100 100",
    "000 110 110",
    "000 011 011",
    "000 000 111",
    "000 000 110",
    "000 000 011",
];

pub fn name(archetype: u8) -> &'static str {
    NAMES[usize::from(archetype - 1)]
}

pub fn expected_mask(archetype: u8) -> DetectionVector {
    MASKS[usize::from(archetype - 1)]
        .parse()
        .expect("static mask")
}

pub fn category_of(archetype: u8) -> u8 {
    match archetype {
        1..=6 => 1,
        7..=9 => 2,
        10 => 3,
        11..=13 => 4,
        _ => 5,
    }
}

pub fn archetype_catalog() -> Vec<SignatureSpec> {
    (1..=ARCHETYPE_COUNT)
        .map(|a| {
            let (gain, duration) = ranges(a);
            SignatureSpec {
                archetype: a,
                name: name(a).to_string(),
                category: category_of(a),
                mask: expected_mask(a),
                gain,
                duration,
                recurrence: if a == 6 || a == 10 {
                    Recurrence::Weekly
                } else {
                    Recurrence::Random
                },
            }
        })
        .collect()
}

fn ranges(a: u8) -> ((f64, f64), (usize, usize)) {
    match a {
        1 => ((0.9, 1.1), (10, 10)),
        2 => ((0.8, 1.25), (74, 86)),
        3 => ((0.8, 1.25), (16, 16)),
        4 => ((0.8, 1.25), (64, 64)),
        5 => ((0.8, 1.25), (33, 48)),
        6 => ((0.8, 1.25), (osc_len(), osc_len())),
        7 => ((0.97, 1.03), (3, 3)),
        8 => ((0.8, 1.25), (60, 90)),
        9 => ((0.8, 1.25), (60, 90)),
        10 => ((0.8, 1.25), (20, 40)),
        11 => ((0.8, 1.25), (4, 4)),
        12 => ((0.8, 1.25), (24, 36)),
        13 => ((0.8, 1.25), (40, 40)),
        14 => ((0.8, 1.25), (60, 90)),
        15 => ((0.8, 1.25), (20, 30)),
        _ => ((0.8, 1.25), (4, 4)),
    }
}

/// Span of the oscillation event: until the envelope falls below 1%.
fn osc_len() -> usize {
    let wn = TAU * OSC_FREQ_HZ / (1.0 - OSC_DAMPING * OSC_DAMPING).sqrt();
    (100f64.ln() / (OSC_DAMPING * wn) * 120.0).ceil() as usize
}

/// Stream-level constants the templates scale against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scales {
    pub v_nominal: f64,
    /// Mean nominal current divided by 40 A.
    pub i_scale: f64,
    pub sample_rate: f64,
}

/// One planted event's concrete parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventInstance {
    pub archetype: u8,
    /// Labeled span in samples.
    pub len: usize,
    pub gain: f64,
    pub phase_gain: [f64; 3],
    /// Archetype-specific: durations in samples, frequencies in Hz, mode or sign.
    pub shape: [f64; 3],
}

impl EventInstance {
    /// Draws a random instance of `archetype` with its catalog variance.
    pub fn draw<R: Rng>(archetype: u8, rng: &mut R) -> Self {
        assert!(
            (1..=ARCHETYPE_COUNT).contains(&archetype),
            "archetype {archetype}"
        );
        let ((g_lo, g_hi), (d_lo, d_hi)) = ranges(archetype);
        let gain = rng.random_range(g_lo..=g_hi);
        let phase_gain = std::array::from_fn(|_| rng.random_range(0.95..=1.05));
        let mut shape = [0.0; 3];
        let len = match archetype {
            1 => {
                shape[0] = f64::from(rng.random_range(0..2u8));
                d_lo
            }
            2 | 8 => {
                let d = rng.random_range(d_lo - 20..=d_hi - 20);
                shape[0] = d as f64;
                shape[1] = rng.random_range(0.93..=1.07);
                d + 20
            }
            5 => {
                let g = rng.random_range(d_lo - 3..=d_hi - 3);
                shape[0] = g as f64;
                shape[1] = rng.random_range(0.9..=1.1);
                g + 3
            }
            7 => {
                shape[0] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                d_lo
            }
            9 => {
                shape[0] = rng.random_range(20.0..=26.0);
                rng.random_range(d_lo..=d_hi)
            }
            14 => {
                shape[0] = rng.random_range(2.7..=3.3);
                rng.random_range(d_lo..=d_hi)
            }
            _ => rng.random_range(d_lo..=d_hi),
        };
        Self {
            archetype,
            len,
            gain,
            phase_gain,
            shape,
        }
    }

    /// Nominal-parameter instance, useful for tests and examples.
    pub fn nominal(archetype: u8) -> Self {
        let ((g_lo, g_hi), (d_lo, d_hi)) = ranges(archetype);
        let mid = (d_lo + d_hi) / 2;
        let mut inst = Self {
            archetype,
            len: mid,
            gain: if archetype == 1 || archetype == 7 {
                1.0
            } else {
                (g_lo + g_hi) / 2.0
            },
            phase_gain: [1.0; 3],
            shape: [0.0; 3],
        };
        match archetype {
            2 | 8 => {
                inst.shape = [(mid - 20) as f64, 1.0, 0.0];
            }
            5 => inst.shape = [(mid - 3) as f64, 1.0, 0.0],
            7 => inst.shape[0] = 1.0,
            9 => inst.shape[0] = 23.0,
            14 => inst.shape[0] = 3.0,
            _ => {}
        }
        inst
    }

    /// Perturbation at sample offset `u` in feature order. Defined for any
    /// `u`; the renderer only uses it inside the labeled span.
    pub fn delta(&self, u: usize, sc: &Scales) -> [f64; FEATURE_COUNT] {
        let mut d = Delta::default();
        let uf = u as f64;
        let g = self.gain;
        let pg = self.phase_gain;
        let amps = sc.i_scale;
        let v0 = sc.v_nominal;
        match self.archetype {
            1 => {
                let (pk, ss) = if self.shape[0] < 0.5 {
                    (60.0, 9.0)
                } else {
                    (30.0, 4.5)
                };
                let e = (-uf / INRUSH_TAU).exp();
                for p in 0..3 {
                    d.i[p] = g * pg[p] * amps * (pk * e + ss * ramp(uf, 2.0));
                    d.pf[p] = -g * (0.5 * e + 0.02 * ramp(uf, 2.0));
                }
                d.couple_voltage(v0 * 0.1 / (60.0 * amps));
            }
            2 => {
                let (dur, ss) = (self.shape[0], 1.5 * self.shape[1]);
                let top = 7.0 * g;
                let i = if uf < dur {
                    top * ramp(uf, 3.0)
                } else {
                    ss + (top - ss) * (-(uf - dur) / 4.0).exp()
                };
                for p in 0..3 {
                    d.i[p] = pg[p] * amps * i;
                    d.pf[p] = -0.015 * i;
                }
                d.couple_voltage(v0 * 0.025 / (7.0 * amps));
            }
            3 => {
                let ring = (-uf / 3.0).exp() * (TAU * uf / 6.0).sin();
                for p in 0..3 {
                    d.v[p] = g * pg[p] * v0 * 0.03 * (ramp(uf, 1.0) + 0.6 * ring);
                    d.i[p] = g * pg[p] * amps * 6.0 * (-ramp(uf, 1.0) + 2.5 * ring);
                    d.pf[p] = g * (0.02 * ramp(uf, 1.0) - 0.3 * ring.abs());
                }
            }
            4 => {
                let tail = (-uf / 12.0).exp() * ramp(uf, 2.0);
                let excess = [2.0, -1.6, 0.0];
                for p in 0..3 {
                    d.v[p] = -g * pg[p] * v0 * 0.03 * ramp(uf, 1.0);
                    d.i[p] = g * pg[p] * amps * 6.0 * (ramp(uf, 1.0) + excess[p] * tail);
                    d.pf[p] = -g * 0.1 * ramp(uf, 1.0);
                }
            }
            5 => {
                let i =
                    g * (6.0 * ramp(uf, 2.0) + 5.0 * self.shape[1] * ramp(uf - self.shape[0], 2.0));
                for p in 0..3 {
                    d.i[p] = pg[p] * amps * i;
                    d.pf[p] = -0.01 * i;
                }
                d.couple_voltage(v0 * 0.025 / (6.0 * amps));
            }
            6 => {
                let t = uf / sc.sample_rate;
                let wd = TAU * OSC_FREQ_HZ;
                let wn = wd / (1.0 - OSC_DAMPING * OSC_DAMPING).sqrt();
                let env = (-OSC_DAMPING * wn * t).exp();
                for p in 0..3 {
                    d.i[p] = g * pg[p] * amps * (5.0 * ramp(uf, 2.0) + 4.0 * env * (wd * t).sin());
                    d.pf[p] = -0.5 * OSC_PF_SWING * env * (1.0 - (wd * t).cos());
                }
                d.couple_voltage(v0 * 0.03 / (5.0 * amps));
            }
            7 => {
                for p in 0..3 {
                    d.v[p] = self.shape[0] * g * v0 * 0.00625 * 4.0 * ramp(uf, 2.0);
                }
            }
            8 => {
                let (dur, ss) = (self.shape[0], 0.15 * self.shape[1]);
                let top = -0.025 * g;
                let v = if uf < dur {
                    top * ramp(uf, 3.0)
                } else {
                    top * (ss + (1.0 - ss) * (-(uf - dur) / 4.0).exp())
                };
                for p in 0..3 {
                    d.v[p] = pg[p] * v0 * v;
                }
            }
            9 => {
                let env = bump(uf, self.len as f64);
                for p in 0..3 {
                    let phase = TAU * self.shape[0] * uf / sc.sample_rate + TAU * p as f64 / 3.0;
                    d.v[p] = g * pg[p] * v0 * 0.035 * env * phase.sin();
                }
            }
            10 => {
                let i = 8.0 * g * bump(uf, self.len as f64);
                for p in 0..3 {
                    d.i[p] = pg[p] * amps * i;
                    d.pf[p] = -0.0125 * i;
                }
            }
            11 => {
                d.i[0] = g * amps * 6.0 * ramp(uf, 3.0);
                d.pf[0] = -g * 0.1 * ramp(uf, 3.0);
            }
            12 => {
                let b = bump(uf, self.len as f64);
                for p in 0..2 {
                    d.i[p] = -g * pg[p] * amps * 6.0 * b;
                    d.pf[p] = -g * 0.08 * b;
                }
            }
            13 => {
                let s = ramp(uf, 2.0) - 0.6 * (1.0 - (-uf / 8.0).exp());
                for p in 1..3 {
                    d.i[p] = -g * pg[p] * amps * 6.0 * s;
                    d.pf[p] = -g * 0.1 * s;
                }
            }
            14 => {
                let env = bump(uf, self.len as f64);
                for p in 0..3 {
                    let phase = TAU * self.shape[0] * uf / sc.sample_rate + TAU * p as f64 / 3.0;
                    d.pf[p] = -g * 0.06 * env * (1.0 - phase.cos());
                }
            }
            15 => {
                let b = bump(uf, self.len as f64);
                for p in 0..2 {
                    d.pf[p] = -g * pg[p] * 0.12 * b;
                }
            }
            _ => {
                for p in 1..3 {
                    d.pf[p] = -g * pg[p] * 0.12 * ramp(uf, 3.0);
                }
            }
        }
        d.flatten()
    }

    /// Offset left behind once the labeled span ends.
    pub fn steady(&self, sc: &Scales) -> [f64; FEATURE_COUNT] {
        self.delta(1 << 24, sc)
    }

    /// Largest absolute perturbation per feature over the span.
    pub fn peak(&self, sc: &Scales) -> [f64; FEATURE_COUNT] {
        let mut peak = [0.0f64; FEATURE_COUNT];
        for u in 0..self.len {
            for (p, d) in peak.iter_mut().zip(self.delta(u, sc)) {
                *p = p.max(d.abs());
            }
        }
        peak
    }
}

#[derive(Default)]
struct Delta {
    v: [f64; 3],
    i: [f64; 3],
    pf: [f64; 3],
}

impl Delta {
    /// Voltage sags in proportion to the added current.
    fn couple_voltage(&mut self, volts_per_amp: f64) {
        for p in 0..3 {
            self.v[p] = -volts_per_amp * self.i[p];
        }
    }

    fn flatten(&self) -> [f64; FEATURE_COUNT] {
        let mut out = [0.0; FEATURE_COUNT];
        out[..3].copy_from_slice(&self.v);
        out[3..6].copy_from_slice(&self.i);
        out[6..].copy_from_slice(&self.pf);
        out
    }
}

/// Raised-cosine rise from 0 at `u <= 0` to 1 at `u >= rise`.
fn ramp(u: f64, rise: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= rise {
        1.0
    } else {
        0.5 - 0.5 * (PI * u / rise).cos()
    }
}

/// Hann bump over `[0, width]`.
fn bump(u: f64, width: f64) -> f64 {
    if u <= 0.0 || u >= width {
        0.0
    } else {
        0.5 - 0.5 * (TAU * u / width).cos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scales() -> Scales {
        Scales {
            v_nominal: 7200.0,
            i_scale: 1.0,
            sample_rate: 120.0,
        }
    }

    #[test]
    fn perturbations_touch_exactly_the_masked_features() {
        let sc = scales();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for a in 1..=ARCHETYPE_COUNT {
            for _ in 0..20 {
                let inst = EventInstance::draw(a, &mut rng);
                let peak = inst.peak(&sc);
                let mask = expected_mask(a);
                for f in 0..FEATURE_COUNT {
                    assert_eq!(peak[f] > 0.0, mask.get(f), "archetype {a} feature {f}");
                }
            }
        }
    }

    #[test]
    fn transients_settle_inside_the_span() {
        let sc = scales();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for a in 1..=ARCHETYPE_COUNT {
            for _ in 0..20 {
                let inst = EventInstance::draw(a, &mut rng);
                let (at_end, steady, peak) =
                    (inst.delta(inst.len, &sc), inst.steady(&sc), inst.peak(&sc));
                for f in 0..FEATURE_COUNT {
                    assert!(
                        (at_end[f] - steady[f]).abs() <= 0.01 * peak[f] + 1e-12,
                        "archetype {a} feature {f}"
                    );
                }
            }
        }
    }

    #[test]
    fn catalog_is_complete() {
        let cat = archetype_catalog();
        assert_eq!(cat.len(), 16);
        assert_eq!(cat[2].mask.to_string(), "111 111 111");
        assert_eq!(cat[7].mask.to_string(), "111 000 000");
        assert_eq!(cat[12].mask.to_string(), "000 011 011");
        assert!(cat
            .iter()
            .all(|s| s.duration.0 > 0 && s.duration.0 <= s.duration.1));
    }

    #[test]
    fn inrush_transient_is_short() {
        let sc = scales();
        let inst = EventInstance::nominal(1);
        let d = inst.delta(0, &sc);
        assert!((d[3] - 60.0).abs() < 1e-12);
        // Within 10 samples the pinnacle has decayed to its steady value.
        let late = inst.delta(9, &sc);
        assert!((late[3] - 9.0).abs() < 0.01 * 60.0);
    }

    #[test]
    fn oscillation_span_covers_the_envelope() {
        let len = osc_len();
        let wn = TAU * OSC_FREQ_HZ / (1.0 - OSC_DAMPING * OSC_DAMPING).sqrt();
        let env = (-OSC_DAMPING * wn * len as f64 / 120.0).exp();
        assert!(env <= 0.01 && env > 0.0098);
    }
}
