//! Independent checks over recorded traces.

use std::collections::HashMap;

use serde::Serialize;

use crate::trace::{Header, Record, Trace};

mod probe;
mod replay;
mod tree_replay;

pub use probe::*;
pub use replay::{friedberg as replay_friedberg, hk as replay_hk, HkSets};

/// One disagreement between a recorded line and the naive re-derivation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Divergence {
    pub line: usize,
    pub stage: u64,
    pub what: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplayReport {
    pub kind: String,
    pub decisions: usize,
    pub divergences: Vec<Divergence>,
}

impl ReplayReport {
    pub fn ok(&self) -> bool {
        self.divergences.is_empty()
    }
}

/// Event stage to file line.
pub(crate) fn event_lines(trace: &Trace) -> HashMap<u64, usize> {
    trace
        .records
        .iter()
        .filter_map(|(line, r)| match r {
            Record::Event { s, .. } => Some((*s, *line)),
            _ => None,
        })
        .collect()
}

/// Stagewise split evidence for `a = a0 ⊔ a1` through `stages`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SplitReport {
    pub stages: u64,
    /// Elements that entered both halves, with the stage of the second entry.
    pub overlaps: Vec<(u64, u64)>,
    /// Half elements seen before (or without) their entry into `a`.
    pub extras: Vec<(u64, u64)>,
    /// Elements of `a` in neither half at the last stage.
    pub pending: Vec<u64>,
    /// Longest wait between entering `a` and reaching a half.
    pub max_lag: u64,
}

impl SplitReport {
    pub fn ok(&self) -> bool {
        self.overlaps.is_empty() && self.extras.is_empty()
    }
}

/// Checks the split at every stage through `stages`. Entrants of `a`
/// waiting to be routed are lag, not violations.
pub fn split_check(log: &crate::EventLog, a: crate::Index, halves: [crate::Index; 2], stages: u64) -> SplitReport {
    let mut rep = SplitReport { stages, ..Default::default() };
    let upto = |i: crate::Index| log.enumeration(i).iter().take_while(move |(t, _)| *t <= stages);
    let mut seen: HashMap<u64, u64> = HashMap::new();
    for (t, x) in upto(halves[0]).chain(upto(halves[1])) {
        if let Some(prev) = seen.insert(*x, *t) {
            rep.overlaps.push((*x, prev.max(*t)));
        }
        match log.entry_stage(a, *x) {
            Some(ta) if ta < *t => rep.max_lag = rep.max_lag.max(t - ta),
            _ => rep.extras.push((*x, *t)),
        }
    }
    rep.pending = upto(a).map(|&(_, x)| x).filter(|x| !seen.contains_key(x)).collect();
    rep.overlaps.sort_unstable();
    rep.extras.sort_unstable();
    rep
}

/// Re-derives every decision in `trace` from its events alone.
pub fn replay_check(trace: &Trace) -> ReplayReport {
    let decisions = trace.decisions().count();
    let (kind, divergences) = match &trace.header {
        None => ("none", vec![Divergence { line: 0, stage: 0, what: "trace has no header".into() }]),
        Some(Header::Enumerate { .. }) => ("enumerate", Vec::new()),
        Some(Header::Friedberg { a, a0, a1, .. }) => ("friedberg", replay::friedberg(trace, *a, [*a0, *a1])),
        Some(Header::Hk { b, a, b0, b1, y, z, .. }) => {
            let sets = HkSets {
                b: *b,
                a: *a,
                halves: [*b0, *b1],
                y: y.iter().copied().collect(),
                z: z.iter().copied().collect(),
            };
            ("hk", replay::hk(trace, &sets))
        }
        Some(Header::Tree { .. }) => ("tree", tree_replay::tree(trace)),
    };
    ReplayReport { kind: kind.into(), decisions, divergences }
}
