//! Herrmann–Kummer splitting of `B` relative to `A`.
//!
//! Requirements `R_{e,j,i}` are coded by `<<e, j>, i>` with `i ∈ {0, 1}`.
//! Each keeps a restraint `r(e,j,i,s) = max(r(e,j,i,s-1), l(e,j,i,s))`
//! starting from its own code, and a ball `x` of `B` goes to `B_i` for the
//! least triple with `x <= r`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::sync::{Arc, Mutex};

use crate::error::ConstructionError;
use crate::kernel::{canonical, cantor_pair, cantor_unpair, GenContext, HostGenerator, Index, Kernel};
use crate::trace::Record;

/// A listing `n ↦ W_{listing(n)}`: the canonical one, with overrides.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Listing {
    overrides: BTreeMap<u64, Index>,
}

impl Listing {
    pub fn canonical() -> Self {
        Self::default()
    }

    pub fn with(mut self, n: u64, index: Index) -> Self {
        self.overrides.insert(n, index);
        self
    }

    pub fn from_pairs(pairs: &[(u64, Index)]) -> Self {
        Self { overrides: pairs.iter().copied().collect() }
    }

    pub fn pairs(&self) -> Vec<(u64, Index)> {
        self.overrides.iter().map(|(&n, &i)| (n, i)).collect()
    }

    pub fn get(&self, n: u64) -> Index {
        canonical(self.overrides.get(&n).copied().unwrap_or(Index(n)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub e: u64,
    pub j: u64,
    pub i: u8,
}

impl Triple {
    pub fn code(self) -> u64 {
        cantor_pair(cantor_pair(self.e, self.j), self.i as u64)
    }

    /// The triple coded by `code`, if its side component is 0 or 1.
    pub fn decode(code: u64) -> Option<Triple> {
        let (p, i) = cantor_unpair(code);
        if i > 1 {
            return None;
        }
        let (e, j) = cantor_unpair(p);
        Some(Triple { e, j, i: i as u8 })
    }
}

/// Least valid triple code `>= n`.
pub fn least_code_from(n: u64) -> u64 {
    (n..).find(|&c| Triple::decode(c).is_some()).expect("side 0 codes are unbounded")
}

/// `l(e,j,i,s)`: the least `x <= s` that is uncovered
/// (`x ∉ B_i ∪ A ∪ Y_e`) or for which
/// `x ∈ (B_i ∩ Y_e) - A  ⟺  x ∉ Z_j`; `s` if there is none.
///
/// Truth table of the second clause for covered `x`:
///
/// | in (B_i∩Y_e)-A | in Z_j | qualifies |
/// |----------------|--------|-----------|
/// | yes            | no     | yes       |
/// | yes            | yes    | no        |
/// | no             | no     | no        |
/// | no             | yes    | yes       |
pub fn disagreement(
    s: u64,
    b_i: impl Fn(u64) -> bool,
    a: impl Fn(u64) -> bool,
    y: impl Fn(u64) -> bool,
    z: impl Fn(u64) -> bool,
) -> u64 {
    (0..=s)
        .find(|&x| {
            let (bx, ax, yx) = (b_i(x), a(x), y(x));
            !(bx || ax || yx) || ((bx && yx && !ax) == !z(x))
        })
        .unwrap_or(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HkRouting {
    pub stage: u64,
    pub ball: u64,
    pub triple: Triple,
    pub l: u64,
    pub r: u64,
}

#[derive(Debug, Default)]
struct Bits(Vec<bool>);

impl Bits {
    fn get(&self, x: u64) -> bool {
        self.0.get(x as usize).copied().unwrap_or(false)
    }

    fn set(&mut self, x: u64) {
        let x = x as usize;
        if x >= self.0.len() {
            self.0.resize(x + 1, false);
        }
        self.0[x] = true;
    }
}

#[derive(Debug, Default)]
pub struct HkState {
    pub b: Index,
    pub a: Index,
    pub halves: [Index; 2],
    pub y: Listing,
    pub z: Listing,
    /// Active triples by code: `(last l, r)`.
    restraint: BTreeMap<u64, (u64, u64)>,
    /// Active codes ordered by their last `l`.
    by_l: BTreeSet<(u64, u64)>,
    /// Tracked-set events absorbed since the last evaluation.
    fresh: Vec<(Index, u64)>,
    /// Every change of `r`: `(code, stage, new r)`.
    pub r_changes: Vec<(u64, u64, u64)>,
    next_p: [u64; 2],
    members: HashMap<Index, Bits>,
    routed: HashSet<u64>,
    backlog: VecDeque<u64>,
    scanned: u64,
    evaluated: Option<u64>,
    pub routings: Vec<HkRouting>,
}

impl HkState {
    pub fn new(b: Index, a: Index, halves: [Index; 2], y: Listing, z: Listing) -> Self {
        Self { b: canonical(b), a: canonical(a), halves, y, z, ..Default::default() }
    }

    /// `r(c, s)` for the last evaluated stage.
    pub fn r(&self, code: u64) -> u64 {
        self.restraint.get(&code).map_or(code, |&(_, r)| r)
    }

    pub fn backlog(&self) -> usize {
        self.backlog.len()
    }

    fn track(&mut self, log: &crate::EventLog, idx: Index) {
        if self.members.contains_key(&idx) {
            return;
        }
        let mut bits = Bits::default();
        for &(t, x) in log.enumeration(idx) {
            if t >= self.scanned {
                break;
            }
            bits.set(x);
        }
        self.members.insert(idx, bits);
    }

    fn absorb(&mut self, log: &crate::EventLog, upto: u64) {
        for ev in log.events_between(self.scanned, upto) {
            if ev.e == self.b {
                self.backlog.push_back(ev.x);
            }
            if let Some(bits) = self.members.get_mut(&ev.e) {
                bits.set(ev.x);
                self.fresh.push((ev.e, ev.x));
            }
        }
        self.scanned = upto;
    }

    fn involves(&self, code: u64, idx: Index) -> bool {
        let t = Triple::decode(code).expect("active codes are valid");
        idx == self.a || idx == self.halves[t.i as usize] || idx == self.y.get(t.e) || idx == self.z.get(t.j)
    }

    fn has(&self, idx: Index, x: u64) -> bool {
        self.members.get(&idx).is_some_and(|b| b.get(x))
    }

    /// Activates the triples coded `<= s` and updates every restraint to
    /// stage `s`. The log must be absorbed through `s`.
    fn evaluate(&mut self, log: &crate::EventLog, s: u64) {
        for idx in [self.a, self.halves[0], self.halves[1]] {
            self.track(log, idx);
        }
        let mut fresh_codes = Vec::new();
        for i in 0..2u8 {
            loop {
                let code = cantor_pair(self.next_p[i as usize], i as u64);
                if code > s {
                    break;
                }
                let (e, j) = cantor_unpair(self.next_p[i as usize]);
                let (ye, zj) = (self.y.get(e), self.z.get(j));
                self.track(log, ye);
                self.track(log, zj);
                self.restraint.insert(code, (u64::MAX, code));
                fresh_codes.push(code);
                self.next_p[i as usize] += 1;
            }
        }
        // l(c) can only move when one of its sets gains an element at or
        // below it, or when it ran off the end of the previous stage.
        let mut dirty: BTreeSet<u64> = BTreeSet::new();
        let prev = self.evaluated.unwrap_or(0);
        dirty.extend(self.by_l.range((prev, 0)..).map(|&(_, c)| c));
        for (idx, x) in std::mem::take(&mut self.fresh) {
            for &(_, code) in self.by_l.range((x, 0)..) {
                if self.involves(code, idx) {
                    dirty.insert(code);
                }
            }
        }
        dirty.extend(fresh_codes);
        for code in dirty {
            let t = Triple::decode(code).expect("active codes are valid");
            let (bi, ye, zj) = (self.halves[t.i as usize], self.y.get(t.e), self.z.get(t.j));
            let l = disagreement(s, |x| self.has(bi, x), |x| self.has(self.a, x), |x| self.has(ye, x), |x| self.has(zj, x));
            let entry = self.restraint.get_mut(&code).expect("active");
            let old = entry.0;
            entry.0 = l;
            if l > entry.1 {
                entry.1 = l;
                self.r_changes.push((code, s, l));
            }
            self.by_l.remove(&(old, code));
            self.by_l.insert((l, code));
        }
        self.evaluated = Some(s);
    }

    /// Routes `x` at stage `s` to the least triple with `x <= r`.
    pub fn route_ball(&mut self, x: u64, s: u64) -> Result<HkRouting, ConstructionError> {
        if !self.routed.insert(x) {
            return Err(ConstructionError::DoubleRoute { ball: x });
        }
        let found = self.restraint.iter().find(|(_, &(_, r))| x <= r).map(|(&c, &(l, r))| (c, l, r));
        let (code, l, r) = found.unwrap_or_else(|| {
            let c = least_code_from(x);
            (c, c, c)
        });
        let triple = Triple::decode(code).expect("valid code");
        let routing = HkRouting { stage: s, ball: x, triple, l, r };
        self.routings.push(routing);
        Ok(routing)
    }
}

#[derive(Debug, Clone)]
pub struct HkHandle {
    pub b: Index,
    pub a: Index,
    pub b0: Index,
    pub b1: Index,
    state: Arc<Mutex<HkState>>,
}

impl HkHandle {
    pub fn with_state<R>(&self, f: impl FnOnce(&HkState) -> R) -> R {
        f(&self.state.lock().expect("hk state poisoned"))
    }

    pub fn routings(&self) -> Vec<HkRouting> {
        self.with_state(|s| s.routings.clone())
    }

    /// Restraint changes and routings, in stage order.
    pub fn trace_records(&self) -> Vec<Record> {
        self.with_state(|st| {
            let mut out = Vec::with_capacity(st.r_changes.len() + st.routings.len());
            let mut routes = st.routings.iter().peekable();
            for &(code, s, r) in &st.r_changes {
                while let Some(rt) = routes.next_if(|rt| rt.stage < s) {
                    out.push(route_record(rt));
                }
                out.push(Record::Restraint { s, code, r });
            }
            out.extend(routes.map(route_record));
            out
        })
    }
}

fn route_record(r: &HkRouting) -> Record {
    Record::Hk {
        s: r.stage,
        x: r.ball,
        triple: (r.triple.e, r.triple.j, r.triple.i),
        l: r.l,
        r: r.r,
        side: r.triple.i,
    }
}

struct HkGenerator {
    state: Arc<Mutex<HkState>>,
    error: Option<ConstructionError>,
}

impl HostGenerator for HkGenerator {
    fn pull(&mut self, ctx: &mut GenContext<'_>) {
        let g = ctx.stage();
        if g == 0 {
            return;
        }
        let mut st = self.state.lock().expect("hk state poisoned");
        let log = ctx.log();
        st.absorb(log, g);
        let s = g - 1;
        st.evaluate(log, s);
        if ctx.pending() > 0 || self.error.is_some() {
            return;
        }
        if let Some(x) = st.backlog.pop_front() {
            match st.route_ball(x, s) {
                Ok(r) => {
                    let half = st.halves[r.triple.i as usize];
                    ctx.emit(half, x);
                }
                Err(e) => self.error = Some(e),
            }
        }
    }
}

/// Registers an HK split of `W_b` relative to `W_a` without stepping.
pub fn attach(kernel: &mut Kernel, b: Index, a: Index, y: Listing, z: Listing) -> HkHandle {
    let state = Arc::new(Mutex::new(HkState::default()));
    let gen = HkGenerator { state: state.clone(), error: None };
    let idx = kernel.register_with_sets(Box::new(gen), 1);
    *state.lock().unwrap() = HkState::new(b, a, [idx[0], idx[1]], y, z);
    HkHandle { b, a, b0: idx[0], b1: idx[1], state }
}

pub fn run(kernel: &mut Kernel, b: Index, a: Index, y: Listing, z: Listing, last: u64) -> Result<HkHandle, ConstructionError> {
    let handle = attach(kernel, b, a, y, z);
    kernel.run_through(last)?;
    Ok(handle)
}

/// First element of `W_{a,s}` missing from `W_{b,s}`.
pub fn a_outside_b(log: &crate::EventLog, a: Index, b: Index, s: u64) -> Option<u64> {
    log.enumeration(a).iter().take_while(|(t, _)| *t <= s).map(|&(_, x)| x).find(|&x| !log.contains_at(b, x, s))
}
