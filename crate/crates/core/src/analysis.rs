//! Delay between random environment events and the interruptions that follow.

use crate::runner::{TraceKind, TraceRecord};
use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterruptionRecord {
    pub episode: u64,
    pub event_time: u64,
    pub interruption_time: u64,
    pub delay: u64,
}

/// Pairs each interruption with the most recent random event at or before it
/// in the same episode. Returns the pairs and the number left unpaired.
pub fn pair_interruptions(records: &[TraceRecord]) -> (Vec<InterruptionRecord>, u64) {
    let mut by_episode: BTreeMap<u64, (Vec<u64>, Vec<u64>)> = BTreeMap::new();
    for r in records {
        let entry = by_episode.entry(r.episode).or_default();
        match &r.kind {
            TraceKind::Event { kind } if kind.is_random() => entry.0.push(r.time),
            TraceKind::Interruption { .. } => entry.1.push(r.time),
            _ => {}
        }
    }
    let mut pairs = Vec::new();
    let mut unpaired = 0;
    for (episode, (mut events, interruptions)) in by_episode {
        events.sort_unstable();
        for t in interruptions {
            match events.iter().rev().find(|&&e| e <= t) {
                Some(&e) => pairs.push(InterruptionRecord { episode, event_time: e, interruption_time: t, delay: t - e }),
                None => unpaired += 1,
            }
        }
    }
    (pairs, unpaired)
}

/// Delay counts for `0..=window`; longer delays are counted apart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayHistogram {
    pub window: u64,
    pub counts: Vec<u64>,
    pub beyond_window: u64,
    pub unpaired: u64,
}

impl DelayHistogram {
    pub fn paired(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.beyond_window
    }

    /// Share of paired interruptions with delay at most `limit`.
    pub fn fraction_within(&self, limit: u64) -> Option<f64> {
        let total = self.paired();
        if total == 0 {
            return None;
        }
        let upto = (limit.min(self.window) + 1) as usize;
        Some(self.counts[..upto].iter().sum::<u64>() as f64 / total as f64)
    }

    /// Non-zero bins as `(delay, count)`.
    pub fn rows(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.counts.iter().enumerate().filter(|(_, c)| **c > 0).map(|(d, c)| (d as u64, *c))
    }
}

pub fn analyze_interruptions(records: &[TraceRecord], window: u64) -> DelayHistogram {
    let (pairs, unpaired) = pair_interruptions(records);
    let mut counts = vec![0u64; window as usize + 1];
    let mut beyond = 0;
    for p in pairs {
        match counts.get_mut(p.delay as usize) {
            Some(c) => *c += 1,
            None => beyond += 1,
        }
    }
    DelayHistogram { window, counts, beyond_window: beyond, unpaired }
}
