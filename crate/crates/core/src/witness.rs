//! Witness constructions: a set with a non-trivial non-Friedberg split,
//! and Shavrukov's `W \ Y`, `Y \ W` operators.

use std::collections::{BTreeSet, VecDeque};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::algebra::ComputablePair;
use crate::error::ConstructionError;
use crate::kernel::{canonical, GenContext, HostGenerator, Index, Kernel};
use crate::EventLog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessBundle {
    pub r: ComputablePair,
    pub k_r: Index,
    pub k_rbar: Index,
    pub a: Index,
}

/// Shared error slot for generators that can fail mid-run.
#[derive(Debug, Clone, Default)]
pub struct Fault(Arc<Mutex<Option<ConstructionError>>>);

impl Fault {
    fn set(&self, e: ConstructionError) {
        let mut slot = self.0.lock().expect("fault poisoned");
        if slot.is_none() {
            *slot = Some(e);
        }
    }

    pub fn take(&self) -> Option<ConstructionError> {
        self.0.lock().expect("fault poisoned").take()
    }
}

struct Witness31 {
    r: ComputablePair,
    sets: [Index; 3],
    scanned: u64,
    pos: BTreeSet<u64>,
    neg: BTreeSet<u64>,
    certified: u64,
    r_seq: Vec<u64>,
    rbar_seq: Vec<u64>,
    wait_r: BTreeSet<u64>,
    wait_rbar: BTreeSet<u64>,
    fault: Fault,
    dead: bool,
}

impl HostGenerator for Witness31 {
    fn pull(&mut self, ctx: &mut GenContext<'_>) {
        if self.dead {
            return;
        }
        let (pos, neg) = (canonical(self.r.pos), canonical(self.r.neg));
        for ev in ctx.log().events_between(self.scanned, ctx.stage()) {
            // The diagonal set {e : e ∈ W_e}.
            if ev.e.0 == ev.x {
                self.wait_r.insert(ev.x);
                self.wait_rbar.insert(ev.x);
            }
            if ev.e == pos {
                self.pos.insert(ev.x);
            }
            if ev.e == neg {
                self.neg.insert(ev.x);
            }
            if self.pos.contains(&ev.x) && self.neg.contains(&ev.x) {
                self.fault.set(ConstructionError::Disjointness { pos: self.r.pos, neg: self.r.neg, element: ev.x });
                self.dead = true;
                return;
            }
        }
        self.scanned = ctx.stage();
        while self.pos.contains(&self.certified) || self.neg.contains(&self.certified) {
            let x = self.certified;
            if self.pos.contains(&x) {
                self.r_seq.push(x);
            } else {
                self.rbar_seq.push(x);
            }
            self.certified += 1;
        }
        let [a, k_r, k_rbar] = self.sets;
        while let Some(&n) = self.wait_r.first().filter(|&&n| (n as usize) < self.r_seq.len()) {
            self.wait_r.remove(&n);
            let x = self.r_seq[n as usize];
            ctx.emit(a, x);
            ctx.emit(k_r, x);
        }
        while let Some(&n) = self.wait_rbar.first().filter(|&&n| (n as usize) < self.rbar_seq.len()) {
            self.wait_rbar.remove(&n);
            let x = self.rbar_seq[n as usize];
            ctx.emit(a, x);
            ctx.emit(k_rbar, x);
        }
    }
}

/// Registers `A = K_R ⊔ K_R̄`, where `K_R` is the diagonal set pushed
/// through the increasing enumeration of `R` and `K_R̄` likewise through
/// its complement.
pub fn attach_31_witness(kernel: &mut Kernel, r: ComputablePair) -> (WitnessBundle, Fault) {
    let fault = Fault::default();
    let gen = Witness31 {
        r,
        sets: [Index(0); 3],
        scanned: 0,
        pos: BTreeSet::new(),
        neg: BTreeSet::new(),
        certified: 0,
        r_seq: Vec::new(),
        rbar_seq: Vec::new(),
        wait_r: BTreeSet::new(),
        wait_rbar: BTreeSet::new(),
        fault: fault.clone(),
        dead: false,
    };
    // The generator learns its own slots through a shared cell.
    let cell = Arc::new(Mutex::new(gen));
    let inner = cell.clone();
    let idx = kernel.register_with_sets(Box::new(move |ctx: &mut GenContext<'_>| inner.lock().unwrap().pull(ctx)), 2);
    cell.lock().unwrap().sets = [idx[0], idx[1], idx[2]];
    (WitnessBundle { r, a: idx[0], k_r: idx[1], k_rbar: idx[2] }, fault)
}

pub fn build_31_witness(kernel: &mut Kernel, r: ComputablePair, last: u64) -> Result<WitnessBundle, ConstructionError> {
    let (bundle, fault) = attach_31_witness(kernel, r);
    kernel.run_through(last)?;
    match fault.take() {
        Some(e) => Err(e),
        None => Ok(bundle),
    }
}

struct ShavPair {
    w: Index,
    y: Index,
    out: [Index; 2],
    scanned: u64,
}

impl HostGenerator for ShavPair {
    fn pull(&mut self, ctx: &mut GenContext<'_>) {
        let log = ctx.log();
        for ev in log.events_between(self.scanned, ctx.stage()) {
            for (side, (first, second)) in [(self.w, self.y), (self.y, self.w)].into_iter().enumerate() {
                if ev.e == first && log.entry_stage(second, ev.x).is_none_or(|t| t > ev.s) {
                    ctx.emit(self.out[side], ev.x);
                }
            }
        }
        self.scanned = ctx.stage();
    }
}

/// Registers `X_0 = W \ Y` and `X_1 = Y \ W`.
pub fn shavrukov_pair(kernel: &mut Kernel, w: Index, y: Index) -> (Index, Index) {
    let cell = Arc::new(Mutex::new(ShavPair { w: canonical(w), y: canonical(y), out: [Index(0); 2], scanned: 0 }));
    let inner = cell.clone();
    let idx = kernel.register_with_sets(Box::new(move |ctx: &mut GenContext<'_>| inner.lock().unwrap().pull(ctx)), 1);
    cell.lock().unwrap().out = [idx[0], idx[1]];
    (idx[0], idx[1])
}

struct ShavSplit {
    a: Index,
    x: [Index; 2],
    out: [Index; 2],
    scanned: u64,
    waiting: BTreeSet<u64>,
    ready: VecDeque<(u64, usize)>,
}

impl HostGenerator for ShavSplit {
    fn pull(&mut self, ctx: &mut GenContext<'_>) {
        let log = ctx.log();
        for ev in log.events_between(self.scanned, ctx.stage()) {
            if ev.e == self.a {
                match (0..2).find(|&i| log.contains(self.x[i], ev.x)) {
                    Some(side) => self.ready.push_back((ev.x, side)),
                    None => {
                        self.waiting.insert(ev.x);
                    }
                }
            }
            for side in 0..2 {
                if ev.e == self.x[side] && self.waiting.remove(&ev.x) {
                    self.ready.push_back((ev.x, side));
                }
            }
        }
        self.scanned = ctx.stage();
        while let Some((x, side)) = self.ready.pop_front() {
            ctx.emit(self.out[side], x);
        }
    }
}

/// Registers `A ∩ X_0`, `A ∩ X_1`; an entrant of `A` is routed once its
/// side is known.
pub fn shav_split(kernel: &mut Kernel, a: Index, x0: Index, x1: Index) -> (Index, Index) {
    let gen = ShavSplit {
        a: canonical(a),
        x: [canonical(x0), canonical(x1)],
        out: [Index(0); 2],
        scanned: 0,
        waiting: BTreeSet::new(),
        ready: VecDeque::new(),
    };
    let cell = Arc::new(Mutex::new(gen));
    let inner = cell.clone();
    let idx = kernel.register_with_sets(Box::new(move |ctx: &mut GenContext<'_>| inner.lock().unwrap().pull(ctx)), 1);
    cell.lock().unwrap().out = [idx[0], idx[1]];
    (idx[0], idx[1])
}

/// Coverage precondition of [`shav_split`] at stage `s`.
pub fn check_coverage(log: &EventLog, a: Index, x0: Index, x1: Index, s: u64) -> Result<(), ConstructionError> {
    for &(t, x) in log.enumeration(a).iter().take_while(|(t, _)| *t <= s) {
        if !log.contains_at(x0, x, s) && !log.contains_at(x1, x, s) {
            return Err(ConstructionError::Coverage { a, x0, x1, element: x, stage: t });
        }
    }
    Ok(())
}
