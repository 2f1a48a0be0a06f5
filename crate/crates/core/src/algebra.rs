//! Stagewise set operators over the event log.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::ConstructionError;
use crate::kernel::{EventLog, Index};

/// `W_{e,s}` frozen at a stage bound.
#[derive(Debug, Clone, Copy)]
pub struct StageSetView<'a> {
    pub index: Index,
    pub bound: u64,
    log: &'a EventLog,
}

impl<'a> StageSetView<'a> {
    pub fn new(log: &'a EventLog, index: Index, bound: u64) -> Self {
        Self { index, bound, log }
    }

    pub fn contains(&self, x: u64) -> bool {
        self.log.contains_at(self.index, x, self.bound)
    }

    pub fn elements(&self) -> BTreeSet<u64> {
        self.log.w_at(self.index, self.bound)
    }

    pub fn len(&self) -> usize {
        self.log.size_at(self.index, self.bound)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `x` entered `a` by stage `s`, strictly before entering `b` (if ever).
pub fn entered_before(log: &EventLog, a: Index, b: Index, x: u64, s: u64) -> bool {
    match log.entry_stage(a, x) {
        Some(ta) if ta <= s => log.entry_stage(b, x).is_none_or(|tb| tb > ta),
        _ => false,
    }
}

/// `A \ B` at stage `s`: elements that entered `A` before `B`.
pub fn before(log: &EventLog, a: Index, b: Index, s: u64) -> BTreeSet<u64> {
    log.enumeration(a)
        .iter()
        .take_while(|(t, _)| *t <= s)
        .filter(|&&(ta, x)| log.entry_stage(b, x).is_none_or(|tb| tb > ta))
        .map(|&(_, x)| x)
        .collect()
}

/// `A ↘ B` at stage `s`: elements of `A \ B` that have since entered `B`.
pub fn before_then(log: &EventLog, a: Index, b: Index, s: u64) -> BTreeSet<u64> {
    log.enumeration(a)
        .iter()
        .take_while(|(t, _)| *t <= s)
        .filter(|&&(ta, x)| log.entry_stage(b, x).is_some_and(|tb| tb > ta && tb <= s))
        .map(|&(_, x)| x)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViolationKind {
    /// In both halves.
    Overlap,
    /// In the whole but in neither half.
    Missing,
    /// In a half but not in the whole.
    Extra,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitVerdict {
    Ok,
    Violation { element: u64, kind: ViolationKind },
}

impl SplitVerdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, SplitVerdict::Ok)
    }
}

/// Is `W_{a0,s} ⊔ W_{a1,s} = W_{a,s}`? Reports the least offending element.
pub fn is_split(log: &EventLog, a: Index, a0: Index, a1: Index, s: u64) -> SplitVerdict {
    let whole = log.w_at(a, s);
    let h0 = log.w_at(a0, s);
    let h1 = log.w_at(a1, s);
    let mut worst: Option<(u64, ViolationKind)> = None;
    let mut note = |x: u64, kind| {
        if worst.is_none_or(|(y, _)| x < y) {
            worst = Some((x, kind));
        }
    };
    if let Some(&x) = h0.intersection(&h1).next() {
        note(x, ViolationKind::Overlap);
    }
    if let Some(&x) = whole.iter().find(|x| !h0.contains(x) && !h1.contains(x)) {
        note(x, ViolationKind::Missing);
    }
    if let Some(&x) = h0.union(&h1).find(|x| !whole.contains(x)) {
        note(x, ViolationKind::Extra);
    }
    match worst {
        None => SplitVerdict::Ok,
        Some((element, kind)) => SplitVerdict::Violation { element, kind },
    }
}

/// A computable set given by enumerations of itself and its complement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComputablePair {
    pub pos: Index,
    pub neg: Index,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    In,
    Out,
    Unknown,
}

/// Finite-stage reading of a [`ComputablePair`].
#[derive(Debug, Clone)]
pub struct ComputableView<'a> {
    /// Every `x < certified` is decided.
    pub certified: u64,
    pair: ComputablePair,
    bound: u64,
    log: &'a EventLog,
}

impl ComputableView<'_> {
    pub fn membership(&self, x: u64) -> Membership {
        if x >= self.certified {
            Membership::Unknown
        } else if self.log.contains_at(self.pair.pos, x, self.bound) {
            Membership::In
        } else {
            Membership::Out
        }
    }
}

pub fn computable_view(log: &EventLog, pair: ComputablePair, s: u64) -> Result<ComputableView<'_>, ConstructionError> {
    let pos = log.w_at(pair.pos, s);
    if let Some(&x) = pos.iter().find(|&&x| log.contains_at(pair.neg, x, s)) {
        return Err(ConstructionError::Disjointness { pos: pair.pos, neg: pair.neg, element: x });
    }
    let mut certified = 0;
    while pos.contains(&certified) || log.contains_at(pair.neg, certified, s) {
        certified += 1;
    }
    Ok(ComputableView { certified, pair, bound: s, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::EnumerationEvent;

    const A: Index = Index(1);
    const B: Index = Index(3);

    fn log() -> EventLog {
        let ev = |s, e, x| EnumerationEvent { s, e, x };
        EventLog::from_events([ev(1, A, 5), ev(2, B, 5), ev(3, B, 7), ev(4, A, 7)], 5)
    }

    #[test]
    fn before_examples() {
        let log = log();
        assert_eq!(before(&log, A, B, 4), BTreeSet::from([5]));
        assert_eq!(before(&log, B, A, 4), BTreeSet::from([7]));
        assert!(before(&log, A, A, 4).is_empty());
    }

    #[test]
    fn before_then_examples() {
        let log = log();
        assert_eq!(before_then(&log, A, B, 4), BTreeSet::from([5]));
        assert_eq!(before_then(&log, B, A, 4), BTreeSet::from([7]));
        // W \ A = (W - A) ⊔ (W ↘ A) at s = 4: {7} = ∅ ⊔ {7}
        let diff: BTreeSet<u64> = log.w_at(B, 4).difference(&log.w_at(A, 4)).copied().collect();
        assert!(diff.is_empty());
        // before a's entry is seen, 7 is only in B \ A, not yet in B ↘ A
        assert_eq!(before(&log, B, A, 3), BTreeSet::from([7]));
        assert!(before_then(&log, B, A, 3).is_empty());
    }

    #[test]
    fn split_verdicts() {
        let log = log();
        let empty = Index(0);
        assert!(is_split(&log, empty, empty, empty, 4).is_ok());
        assert_eq!(
            is_split(&log, A, A, A, 4),
            SplitVerdict::Violation { element: 5, kind: ViolationKind::Overlap }
        );
        assert_eq!(
            is_split(&log, A, empty, empty, 4),
            SplitVerdict::Violation { element: 5, kind: ViolationKind::Missing }
        );
        assert_eq!(
            is_split(&log, empty, B, empty, 4),
            SplitVerdict::Violation { element: 5, kind: ViolationKind::Extra }
        );
    }

    #[test]
    fn computable_views() {
        let ev = |s, e, x| EnumerationEvent { s, e, x };
        let log = EventLog::from_events([ev(0, A, 0), ev(1, B, 1), ev(2, A, 2), ev(3, B, 5)], 4);
        let view = computable_view(&log, ComputablePair { pos: A, neg: B }, 3).unwrap();
        assert_eq!(view.certified, 3);
        assert_eq!(view.membership(2), Membership::In);
        assert_eq!(view.membership(1), Membership::Out);
        assert_eq!(view.membership(5), Membership::Unknown);

        let empty = computable_view(&log, ComputablePair { pos: Index(0), neg: Index(2) }, 3).unwrap();
        assert_eq!(empty.certified, 0);

        let bad = EventLog::from_events([ev(0, A, 0), ev(1, B, 0)], 2);
        assert!(matches!(
            computable_view(&bad, ComputablePair { pos: A, neg: B }, 1),
            Err(ConstructionError::Disjointness { element: 0, .. })
        ));
    }
}
