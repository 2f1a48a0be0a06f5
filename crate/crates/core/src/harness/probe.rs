//! Stage-bounded evidence for notions no finite run can decide.

use serde::Serialize;

use crate::error::ConstructionError;
use crate::kernel::{canonical, EventLog, Index, Kernel};
use crate::tree::{attach, verdicts, Procedure, VerdictPoint};

/// Default trailing window: a tenth of the run.
pub fn window(stages: u64) -> u64 {
    (stages / 10).max(1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Candidate {
    Live,
    Refuted { stage: u64, reason: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct TrivialEvidence {
    pub half: Index,
    pub stages: u64,
    pub window: u64,
    pub candidates: Vec<(u64, Candidate)>,
}

impl TrivialEvidence {
    pub fn all_refuted(&self) -> bool {
        self.candidates.iter().all(|(_, c)| matches!(c, Candidate::Refuted { .. }))
    }
}

/// Least `x` outside every listed set at stage `s`.
fn covered(log: &EventLog, sets: &[Index], s: u64) -> u64 {
    (0..).find(|&x| !sets.iter().any(|&i| log.contains_at(i, x, s))).expect("finite stage")
}

/// Is `W_j` the complement of `half`? Refuted by an overlap, or by the
/// covered prefix of `half ∪ W_j` standing still over the trailing window.
pub fn probe_trivial_split(log: &EventLog, half: Index, stages: u64, j_max: u64) -> TrivialEvidence {
    let w = window(stages);
    let candidates = (0..j_max)
        .map(|j| {
            let wj = canonical(Index(j));
            let overlap = log
                .enumeration(half)
                .iter()
                .filter_map(|&(t, x)| log.entry_stage(wj, x).map(|u| (t.max(u), x)))
                .filter(|&(t, _)| t <= stages)
                .min();
            let status = match overlap {
                Some((t, x)) => Candidate::Refuted { stage: t, reason: format!("{x} is in both") },
                None => {
                    let (then, now) = (covered(log, &[half, wj], stages.saturating_sub(w)), covered(log, &[half, wj], stages));
                    if now > then {
                        Candidate::Live
                    } else {
                        Candidate::Refuted { stage: stages, reason: format!("{now} uncovered since stage {}", stages.saturating_sub(w)) }
                    }
                }
            };
            (j, status)
        })
        .collect();
    TrivialEvidence { half, stages, window: w, candidates }
}

/// `|W ↘ A|` at stage `s`.
fn before_then_len(log: &EventLog, w: Index, a: Index, s: u64) -> usize {
    log.enumeration(a)
        .iter()
        .take_while(|(t, _)| *t <= s)
        .filter(|&&(t, x)| log.entry_stage(w, x).is_some_and(|u| u < t))
        .count()
}

/// `|W_s \ A_s|`.
fn minus_len(log: &EventLog, w: Index, a: Index, s: u64) -> usize {
    log.enumeration(w).iter().take_while(|(t, _)| *t <= s).filter(|&&(_, x)| !log.contains_at(a, x, s)).count()
}

#[derive(Debug, Clone, Serialize)]
pub struct FriedbergRow {
    pub j: u64,
    /// `|W_j − A|`, `|W_j − A_0|`, `|W_j − A_1|` at the last stage.
    pub minus: [usize; 3],
    /// `|W_j ↘ A|`, `|W_j ↘ A_0|`, `|W_j ↘ A_1|` at the start of the
    /// growth span, the start of the window and the last stage.
    pub early: [usize; 3],
    pub then: [usize; 3],
    pub now: [usize; 3],
    /// Halves whose `↘` counter stood still while `W_j ↘ A` grew.
    pub stalled: Vec<u8>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FriedbergEvidence {
    pub stages: u64,
    pub window: u64,
    pub growth: u64,
    pub rows: Vec<FriedbergRow>,
}

impl FriedbergEvidence {
    pub fn signatures(&self) -> impl Iterator<Item = &FriedbergRow> {
        self.rows.iter().filter(|r| !r.stalled.is_empty())
    }
}

/// A half's `↘` counter standing still over the trailing window while
/// `W_j ↘ A` grew over the trailing half of the run.
pub fn probe_friedberg(log: &EventLog, a: Index, a0: Index, a1: Index, stages: u64, j_max: u64) -> FriedbergEvidence {
    let w = window(stages);
    let growth = (stages / 2).max(1);
    let sets = [a, a0, a1];
    let rows = (0..j_max)
        .map(|j| {
            let wj = canonical(Index(j));
            let count = |s: u64| sets.map(|x| before_then_len(log, wj, x, s));
            let (early, then, now) = (count(stages.saturating_sub(growth)), count(stages.saturating_sub(w)), count(stages));
            let grew = now[0] > early[0];
            let stalled = (0..2u8).filter(|&i| grew && now[1 + i as usize] == then[1 + i as usize]).collect();
            FriedbergRow { j, minus: sets.map(|x| minus_len(log, wj, x, stages)), early, then, now, stalled }
        })
        .collect();
    FriedbergEvidence { stages, window: w, growth, rows }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum DStatus {
    Consistent { through: u64, covered: u64 },
    Counterexample { x: u64, reason: String },
}

/// Checks `W ∪ Y ∪ A` covering a growing interval and `(W ∩ Y) − A`
/// agreeing with `Z` on it.
pub fn d_probe(log: &EventLog, a: Index, w: Index, y: Index, z: Index, stages: u64) -> DStatus {
    let sets = [w, y, a];
    let then = covered(log, &sets, stages.saturating_sub(window(stages)));
    let now = covered(log, &sets, stages);
    let at = |i: Index, x: u64| log.contains_at(i, x, stages);
    if let Some(x) = (0..now).find(|&x| (at(w, x) && at(y, x) && !at(a, x)) != at(z, x)) {
        return DStatus::Counterexample { x, reason: "disagrees with Z".into() };
    }
    if now <= then && stages > 0 {
        return DStatus::Counterexample { x: now, reason: "uncovered".into() };
    }
    DStatus::Consistent { through: stages, covered: now }
}

#[derive(Debug, Clone, Serialize)]
pub struct Round {
    pub index: Index,
    /// The pair the next procedure answers at `index`.
    pub patch: (Index, Index),
    pub verdict: VerdictPoint,
    pub stable: bool,
}

/// Diagonalizes against `h0`, then against `h0` patched at the index just
/// produced, and so on; all rounds share one kernel.
pub fn iterate_corollary(kernel: &mut Kernel, h0: &Procedure, rounds: usize, stages: u64, depth: u32) -> Result<Vec<Round>, ConstructionError> {
    let mut h = h0.clone();
    let mut attached = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let handle = attach(kernel, &h, depth)?;
        h.patches.insert(handle.a);
        let patch = h.apply(kernel, handle.a)?;
        attached.push((handle, patch));
    }
    kernel.run_through(stages)?;
    Ok(attached
        .into_iter()
        .map(|(handle, patch)| {
            let points = verdicts(kernel.log(), &handle, stages);
            let last = points.last().cloned().expect("checkpoints");
            let stable = points.iter().all(|p| p.case == last.case);
            Round { index: handle.a, patch, verdict: last, stable }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{Corpus, EnumerationEvent, ALL_PROGRAM, EVENS_PROGRAM, ODDS_PROGRAM};

    fn log(evs: &[(u64, u64, u64)]) -> EventLog {
        EventLog::from_events(evs.iter().map(|&(s, e, x)| EnumerationEvent { s, e: Index(e), x }), 0)
    }

    #[test]
    fn complement_of_empty_half_stays_live() {
        let mut k = Kernel::new(Corpus::standard(8));
        k.run_through(20_000).unwrap();
        let all = k.program_index(ALL_PROGRAM);
        let ev = probe_trivial_split(k.log(), k.empty_index(), 20_000, all.0 + 1);
        assert_eq!(ev.candidates[all.0 as usize].1, Candidate::Live);
        let evens = k.program_index(EVENS_PROGRAM);
        let odds = k.program_index(ODDS_PROGRAM);
        let ev = probe_trivial_split(k.log(), evens, 20_000, odds.0 + 1);
        assert_eq!(ev.candidates[odds.0 as usize].1, Candidate::Live);
        assert!(matches!(ev.candidates[all.0 as usize].1, Candidate::Refuted { .. }));
    }

    #[test]
    fn empty_a_has_no_signature() {
        let mut k = Kernel::new(Corpus::standard(8));
        k.run_through(2000).unwrap();
        let e = k.empty_index();
        assert_eq!(probe_friedberg(k.log(), e, e, e, 2000, 16).signatures().count(), 0);
    }

    #[test]
    fn d_probe_cases() {
        // W = 2 holds 0..3, Y and A and Z empty.
        let l = log(&[(0, 2, 0), (1, 2, 1), (2, 2, 2), (10, 2, 3)]);
        assert!(matches!(d_probe(&l, Index(5), Index(2), Index(7), Index(9), 10), DStatus::Consistent { covered: 4, .. }));
        let gap = log(&[(0, 2, 0), (1, 2, 2)]);
        assert_eq!(d_probe(&gap, Index(5), Index(2), Index(7), Index(9), 10), DStatus::Counterexample { x: 1, reason: "uncovered".into() });
        let z = log(&[(0, 2, 0), (1, 7, 0), (5, 2, 1), (6, 7, 1), (8, 9, 1), (9, 2, 2)]);
        assert_eq!(d_probe(&z, Index(5), Index(2), Index(7), Index(9), 10), DStatus::Counterexample { x: 0, reason: "disagrees with Z".into() });
    }

    #[test]
    fn no_rounds_no_indices() {
        let mut k = Kernel::new(Corpus::standard(8));
        assert!(iterate_corollary(&mut k, &Procedure::default(), 0, 10, 9).unwrap().is_empty());
    }
}
