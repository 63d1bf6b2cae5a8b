//! Shared fixtures for the integration and acceptance targets.
#![allow(dead_code)]

use gridsift::ingest::{derive_all, fit_norm_stats, FEATURE_COUNT};
use gridsift::similarity::{scale_from_std, EventMatrix};
use gridsift::synth::archetype::expected_mask;
use gridsift::synth::{render, EventInstance, GroundTruthLabel, PlannedEvent, Role, SynthConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Samples kept before and after the labeled span of a planted event.
pub const CUT_PAD: usize = 20;
const SPACING: usize = 1200;
const LEAD: usize = 300;

/// One isolated planted event cut at its ground-truth span.
#[derive(Debug, Clone)]
pub struct Planted {
    pub archetype: u8,
    pub ts: i64,
    pub m: EventMatrix<f64>,
}

/// Renders `count` random instances of each archetype in shuffled order,
/// each on its own quiet stretch, and cuts them at the labeled spans. Also
/// returns the MCC feature scale of the rendered stream.
pub fn planted_set(kinds: &[(u8, usize)], seed: u64) -> (Vec<Planted>, [f64; FEATURE_COUNT]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<u8> = kinds
        .iter()
        .flat_map(|&(a, n)| std::iter::repeat_n(a, n))
        .collect();
    order.shuffle(&mut rng);
    let cfg = SynthConfig {
        seed,
        duration_s: ((LEAD + order.len() * SPACING) as f64 / 120.0).max(600.0),
        event_rate: 0.0,
        relax_s: 2.0,
        ..SynthConfig::default()
    };
    let plan: Vec<PlannedEvent> = order
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            let instance = EventInstance::draw(a, &mut rng);
            let start = LEAD + k * SPACING;
            let end = start + instance.len;
            PlannedEvent {
                label: GroundTruthLabel {
                    id: k as u32 + 1,
                    start,
                    end,
                    start_ts: cfg.timestamp(start),
                    end_ts: cfg.timestamp(end - 1),
                    archetype: a,
                    role: Role::Single,
                    sequence: None,
                },
                instance,
            }
        })
        .collect();
    let frames = render(&cfg, &plan).expect("valid planted config");
    let feats = derive_all(&frames).expect("finite frames");
    let scale = scale_from_std(&fit_norm_stats(&feats).expect("non-empty stream").std);
    let set = plan
        .iter()
        .map(|e| {
            let (lo, hi) = (e.label.start - CUT_PAD, e.label.end + CUT_PAD);
            let len = hi - lo;
            let mut data = Vec::with_capacity(FEATURE_COUNT * len);
            for f in 0..FEATURE_COUNT {
                data.extend(feats[lo..hi].iter().map(|x| x.f[f]));
            }
            let mut m = EventMatrix::new(len, data).expect("non-empty cut");
            m.vector = Some(expected_mask(e.label.archetype));
            Planted {
                archetype: e.label.archetype,
                ts: e.label.start_ts,
                m,
            }
        })
        .collect();
    (set, scale)
}
