use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A cluster addressed across categories; cluster ids are per category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClusterRef {
    pub category: u32,
    pub cluster: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineEvent {
    pub id: u64,
    pub start_ts: i64,
    pub end_ts: i64,
    pub cluster: ClusterRef,
}

/// A trigger followed by a chain of follower events. Each link (trigger to
/// first follower, follower to follower) may leave at most `max_gap_s` of
/// quiet time between the end of one event and the onset of the next.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceRule {
    pub trigger: ClusterRef,
    pub follower: ClusterRef,
    pub max_gap_s: f64,
    pub min_count: usize,
}

impl SequenceRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_gap_s > 0.0) || self.min_count == 0 {
            return Err(Error::InvalidArgument(
                "sequence rule needs a positive gap and count".into(),
            ));
        }
        Ok(())
    }

    fn gap_us(&self) -> i64 {
        (self.max_gap_s * 1e6).round() as i64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceMatch {
    pub trigger: u64,
    pub followers: Vec<u64>,
    pub start_ts: i64,
    pub end_ts: i64,
}

/// Every trigger whose follower chain reaches `min_count`. Followers are taken
/// in onset order; events of other clusters are ignored. Expects `timeline`
/// sorted by onset.
pub fn mine_sequences(
    timeline: &[TimelineEvent],
    rule: &SequenceRule,
) -> Result<Vec<SequenceMatch>> {
    rule.validate()?;
    if timeline.windows(2).any(|w| w[1].start_ts < w[0].start_ts) {
        return Err(Error::InvalidArgument(
            "timeline is not sorted by onset".into(),
        ));
    }
    let gap = rule.gap_us();
    let followers: Vec<&TimelineEvent> = timeline
        .iter()
        .filter(|e| e.cluster == rule.follower)
        .collect();
    // run_end[k]: index one past the last follower chained from follower k.
    let mut run_end = vec![followers.len(); followers.len()];
    for k in (0..followers.len().saturating_sub(1)).rev() {
        run_end[k] = if followers[k + 1].start_ts - followers[k].end_ts <= gap {
            run_end[k + 1]
        } else {
            k + 1
        };
    }
    let mut out = Vec::new();
    for t in timeline.iter().filter(|e| e.cluster == rule.trigger) {
        let first = followers.partition_point(|f| f.start_ts <= t.start_ts);
        if first == followers.len() || followers[first].start_ts - t.end_ts > gap {
            continue;
        }
        let chain = &followers[first..run_end[first]];
        if chain.len() >= rule.min_count {
            out.push(SequenceMatch {
                trigger: t.id,
                followers: chain.iter().map(|f| f.id).collect(),
                start_ts: t.start_ts,
                end_ts: chain
                    .iter()
                    .map(|f| f.end_ts)
                    .max()
                    .unwrap_or(t.end_ts)
                    .max(t.end_ts),
            });
        }
    }
    Ok(out)
}

/// Direct scan used to cross-check [`mine_sequences`].
pub fn mine_sequences_brute(timeline: &[TimelineEvent], rule: &SequenceRule) -> Vec<SequenceMatch> {
    let gap = rule.gap_us();
    let mut out = Vec::new();
    for (i, t) in timeline.iter().enumerate() {
        if t.cluster != rule.trigger {
            continue;
        }
        let mut chain: Vec<&TimelineEvent> = Vec::new();
        let mut last_end = t.end_ts;
        for f in &timeline[i + 1..] {
            if f.cluster != rule.follower || f.start_ts <= t.start_ts {
                continue;
            }
            if f.start_ts - last_end > gap {
                break;
            }
            last_end = f.end_ts;
            chain.push(f);
        }
        if chain.len() >= rule.min_count {
            out.push(SequenceMatch {
                trigger: t.id,
                followers: chain.iter().map(|f| f.id).collect(),
                start_ts: t.start_ts,
                end_ts: chain
                    .iter()
                    .map(|f| f.end_ts)
                    .max()
                    .unwrap_or(t.end_ts)
                    .max(t.end_ts),
            });
        }
    }
    out
}
