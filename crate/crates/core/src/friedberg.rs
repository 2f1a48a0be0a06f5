//! Friedberg's splitting construction.
//!
//! Each ball entering `A` is sent to the side of the least requirement
//! `P_{e,i,k}` it can meet: `|W_e ↘ A_i| = k - 1` before the ball arrives
//! and the ball entered `W_e` before it entered `A`. Balls that meet no
//! requirement go to `A_0`.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::{Arc, Mutex};

use crate::error::ConstructionError;
use crate::kernel::{canonical, triple_code, GenContext, HostGenerator, Index, Kernel};
use crate::trace::Record;

/// The requirement `P_{e,i,k}` selected for a ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Requirement {
    pub e: Index,
    pub side: u8,
    pub k: u64,
}

impl Requirement {
    pub fn code(&self) -> u128 {
        triple_code(self.e.0, self.side as u64, self.k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Routing {
    pub stage: u64,
    pub ball: u64,
    pub requirement: Option<Requirement>,
    pub side: u8,
}

/// Live state of one Friedberg construction.
#[derive(Debug, Default)]
pub struct SplitState {
    pub a: Index,
    pub halves: [Index; 2],
    /// `|W_e ↘ A_i|` as measured on the released log.
    counters: HashMap<(Index, u8), u64>,
    routed: HashSet<u64>,
    backlog: VecDeque<(u64, u64)>,
    scanned: u64,
    pub routings: Vec<Routing>,
}

impl SplitState {
    fn new(a: Index, halves: [Index; 2]) -> Self {
        Self { a: canonical(a), halves, ..Default::default() }
    }

    pub fn counter(&self, e: Index, side: u8) -> u64 {
        self.counters.get(&(e, side)).copied().unwrap_or(0)
    }

    /// Balls seen in `A` but not yet routed.
    pub fn backlog(&self) -> usize {
        self.backlog.len()
    }

    /// Picks the side for `x`, which entered `A` at stage `entered`.
    ///
    /// Candidates are the `W_e` that `x` entered strictly before `A`; for
    /// each, the one live requirement per side is `k = counter + 1`.
    pub fn route_ball(&mut self, log: &crate::EventLog, x: u64, entered: u64, stage: u64) -> Result<Routing, ConstructionError> {
        if !self.routed.insert(x) {
            return Err(ConstructionError::DoubleRoute { ball: x });
        }
        let mut best: Option<Requirement> = None;
        for &(e, t) in log.memberships(x) {
            if t >= entered {
                break;
            }
            for side in 0..2u8 {
                let req = Requirement { e, side, k: self.counter(e, side) + 1 };
                if best.is_none_or(|b| req.code() < b.code()) {
                    best = Some(req);
                }
            }
        }
        let side = best.map_or(0, |r| r.side);
        let routing = Routing { stage, ball: x, requirement: best, side };
        self.routings.push(routing);
        Ok(routing)
    }

    fn absorb(&mut self, log: &crate::EventLog, upto: u64) {
        for ev in log.events_between(self.scanned, upto) {
            if ev.e == self.a {
                self.backlog.push_back((ev.x, ev.s));
            }
            for side in 0..2u8 {
                if ev.e == self.halves[side as usize] {
                    for &(e, t) in log.memberships(ev.x) {
                        if t >= ev.s {
                            break;
                        }
                        *self.counters.entry((e, side)).or_default() += 1;
                    }
                }
            }
        }
        self.scanned = upto;
    }
}

/// Shared handle to a running construction.
#[derive(Debug, Clone)]
pub struct FriedbergHandle {
    pub a: Index,
    pub a0: Index,
    pub a1: Index,
    state: Arc<Mutex<SplitState>>,
}

impl FriedbergHandle {
    pub fn with_state<R>(&self, f: impl FnOnce(&SplitState) -> R) -> R {
        f(&self.state.lock().expect("friedberg state poisoned"))
    }

    pub fn routings(&self) -> Vec<Routing> {
        self.with_state(|s| s.routings.clone())
    }

    pub fn counter(&self, e: Index, side: u8) -> u64 {
        self.with_state(|s| s.counter(e, side))
    }

    pub fn trace_records(&self) -> Vec<Record> {
        self.routings()
            .into_iter()
            .map(|r| Record::Route {
                s: r.stage,
                x: r.ball,
                req: r.requirement.map(|q| (q.e, q.side, q.k)),
                side: r.side,
            })
            .collect()
    }
}

struct FriedbergGenerator {
    state: Arc<Mutex<SplitState>>,
    error: Option<ConstructionError>,
}

impl HostGenerator for FriedbergGenerator {
    fn pull(&mut self, ctx: &mut GenContext<'_>) {
        let mut st = self.state.lock().expect("friedberg state poisoned");
        let log = ctx.log();
        st.absorb(log, ctx.stage());
        // One ball at a time, and only once the previous one is released,
        // so the counters always describe the released log.
        if ctx.pending() > 0 || self.error.is_some() {
            return;
        }
        if let Some((x, entered)) = st.backlog.pop_front() {
            match st.route_ball(log, x, entered, ctx.stage()) {
                Ok(r) => {
                    let half = st.halves[r.side as usize];
                    ctx.emit(half, x);
                }
                Err(e) => self.error = Some(e),
            }
        }
    }
}

/// Registers a Friedberg split of `W_a` on `kernel` without stepping it.
pub fn attach(kernel: &mut Kernel, a: Index) -> FriedbergHandle {
    let state = Arc::new(Mutex::new(SplitState::default()));
    let gen = FriedbergGenerator { state: state.clone(), error: None };
    let idx = kernel.register_with_sets(Box::new(gen), 1);
    let (a0, a1) = (idx[0], idx[1]);
    *state.lock().unwrap() = SplitState::new(a, [a0, a1]);
    FriedbergHandle { a, a0, a1, state }
}

/// The uniform splitting procedure: `e ↦ (e0, e1)`.
pub fn h_f(kernel: &mut Kernel, e: Index) -> (Index, Index) {
    let handle = attach(kernel, e);
    (handle.a0, handle.a1)
}

/// Splits `W_a` and steps the kernel through stage `last`.
pub fn run(kernel: &mut Kernel, a: Index, last: u64) -> Result<FriedbergHandle, ConstructionError> {
    let handle = attach(kernel, a);
    kernel.run_through(last)?;
    Ok(handle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::is_split;
    use crate::kernel::{Corpus, EnumerationEvent, EventLog};

    #[test]
    fn no_meetable_requirement_goes_left() {
        let log = EventLog::from_events([EnumerationEvent { s: 0, e: Index(1), x: 4 }], 1);
        let mut st = SplitState::new(Index(1), [Index(3), Index(5)]);
        let r = st.route_ball(&log, 4, 0, 1).unwrap();
        assert_eq!(r.side, 0);
        assert_eq!(r.requirement, None);
        assert!(matches!(st.route_ball(&log, 4, 0, 2), Err(ConstructionError::DoubleRoute { ball: 4 })));
    }

    #[test]
    fn least_code_wins() {
        // x = 9 entered W_3 at stage 0, then A = W_1 at stage 1.
        let ev = |s, e, x| EnumerationEvent { s, e: Index(e), x };
        let log = EventLog::from_events([ev(0, 3, 9), ev(1, 1, 9)], 2);
        let mut st = SplitState::new(Index(1), [Index(5), Index(7)]);
        st.counters.insert((Index(3), 0), 20);
        // <3,1,1> = 79 beats <3,0,21> = 399
        assert_eq!(triple_code(3, 1, 1), 79);
        assert_eq!(triple_code(3, 0, 21), 399);
        let r = st.route_ball(&log, 9, 1, 2).unwrap();
        assert_eq!(r.side, 1);
        assert_eq!(r.requirement, Some(Requirement { e: Index(3), side: 1, k: 1 }));
    }

    #[test]
    fn empty_input_gives_empty_halves() {
        let mut k = Kernel::new(Corpus::standard(16));
        let empty = k.empty_index();
        let h = run(&mut k, empty, 2000).unwrap();
        assert!(h.routings().is_empty());
        assert!(k.log().w_at(h.a0, 2000).is_empty());
        assert!(k.log().w_at(h.a1, 2000).is_empty());
    }

    #[test]
    fn halves_split_a_total_program() {
        let mut k = Kernel::new(Corpus::standard(64));
        // Every even number reaches W_2 = N before it reaches the evens.
        let all = k.program_index(crate::kernel::EVENS_PROGRAM);
        let h = run(&mut k, all, 20_000).unwrap();
        assert!(!h.routings().is_empty());
        let log = k.log();
        for s in (0..20_000).step_by(97) {
            let v = is_split(log, all, h.a0, h.a1, s);
            // Entrants not yet released into a half show up as missing.
            if let crate::algebra::SplitVerdict::Violation { kind, .. } = v {
                assert_eq!(kind, crate::algebra::ViolationKind::Missing, "stage {s}");
            }
        }
        assert!(k.log().size_at(h.a1, 20_000) > 0);
    }
}
