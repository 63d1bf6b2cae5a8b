use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::EventRecord;

/// Current-magnitude rows in the feature layout.
const CURRENT_ROWS: [usize; 3] = [3, 4, 5];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Samples at each end taken as steady state.
    pub steady_samples: usize,
    /// Transient threshold in pre-event noise standard deviations.
    pub transient_k: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            steady_samples: 20,
            transient_k: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventFeatures {
    pub event_id: u64,
    /// Post minus pre steady-state current per phase, amperes.
    pub delta_iss: [f64; 3],
    pub delta_iss_mean: f64,
    /// Peak excursion of the phase-mean current above its pre steady state.
    pub inr: f64,
    pub transient_len: usize,
    /// Samples from onset on where the phase-mean current lies beyond the
    /// transient threshold around the post steady state.
    pub overshoot_len: usize,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn std(v: &[f64]) -> f64 {
    crate::scalar::mean_std(v).1
}

/// Steady-state change, inrush peak and transient length from the current
/// magnitude rows of an event with steady padding at both ends.
pub fn extract_event_features(e: &EventRecord, cfg: &FeatureConfig) -> Result<EventFeatures> {
    let m = cfg.steady_samples;
    if m == 0 || e.len < 2 * m + 1 {
        return Err(Error::InsufficientData(format!(
            "event {} spans {} samples; need {} of padding on each side",
            e.id, e.len, m
        )));
    }
    e.check()?;
    let n = e.len;
    let mean_current: Vec<f64> = (0..n)
        .map(|t| CURRENT_ROWS.iter().map(|&r| e.row(r)[t]).sum::<f64>() / 3.0)
        .collect();
    let delta_iss = CURRENT_ROWS.map(|r| {
        let row = e.row(r);
        median(&row[n - m..]) - median(&row[..m])
    });
    let pre = median(&mean_current[..m]);
    let post = median(&mean_current[n - m..]);
    let thr = cfg.transient_k * std(&mean_current[..m]);
    // Transient samples have left the pre steady state and not yet settled
    // at the post one.
    let out: Vec<bool> = mean_current
        .iter()
        .map(|&v| (v - pre).abs() > thr && (v - post).abs() > thr)
        .collect();
    let (transient_len, inr) = match (out.iter().position(|&b| b), out.iter().rposition(|&b| b)) {
        (Some(a), Some(b)) => {
            let peak = mean_current[a..=b]
                .iter()
                .map(|&v| v - pre)
                .fold(0.0, f64::max);
            (b - a + 1, peak)
        }
        _ => (1, 0.0),
    };
    let onset = mean_current
        .iter()
        .position(|&v| (v - pre).abs() > thr)
        .unwrap_or(n);
    let overshoot_len = mean_current[onset..]
        .iter()
        .filter(|&&v| (v - post).abs() > thr)
        .count();
    Ok(EventFeatures {
        event_id: e.id,
        delta_iss,
        delta_iss_mean: delta_iss.iter().sum::<f64>() / 3.0,
        inr,
        transient_len,
        overshoot_len,
    })
}
