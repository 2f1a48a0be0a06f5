//! Diagonalizing against a uniform splitting procedure on the full binary
//! tree: chip counters, the path approximation `f_n`, the pinball machine
//! and the per-R-node maximal set construction.
//!
//! The construction is one host generator owning `A` and every `R_α`,
//! `R̃_α`. Like the splitters it only acts when all its earlier emissions
//! have been released, so each construction stage `n` sees a log that
//! agrees with its own bookkeeping.

mod build;
pub mod check;
mod chips;
mod node;

use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

pub use build::{e_state_masks, pre, E_STATES};
pub use chips::{Chip, RChip, TChip};
pub use node::{is_square, isqrt, question_at, Node, Question, MAX_DEPTH};

use crate::algebra::ComputablePair;
use crate::error::ConstructionError;
use crate::hk::Listing;
use crate::kernel::{GenContext, HostGenerator, Index, Kernel, ALL_PROGRAM, EVENS_PROGRAM, ODDS_PROGRAM};
use crate::trace::{Header, Record};
use crate::EventLog;
use build::Tree;

/// The splitting procedure a run diagonalizes against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Base {
    /// Friedberg's construction.
    #[default]
    Hf,
    /// `e ↦ (e, ∅)`.
    Trivial,
    /// `e ↦ (∅, ∅)`.
    Broken,
}

/// A procedure `h`: a base rule, indices where it is replaced by the
/// evens/odds split, and indices where it is undefined.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Procedure {
    pub base: Base,
    #[serde(default)]
    pub patches: BTreeSet<Index>,
    #[serde(default)]
    pub undefined: BTreeSet<Index>,
}

impl Procedure {
    pub fn new(base: Base) -> Self {
        Self { base, ..Default::default() }
    }

    /// `h(e) = (e0, e1)`, registering whatever generators it needs.
    pub fn apply(&self, kernel: &mut Kernel, e: Index) -> Result<(Index, Index), ConstructionError> {
        if self.undefined.contains(&e) {
            return Err(ConstructionError::PartialProcedure(e));
        }
        if self.patches.contains(&e) {
            let r = ComputablePair { pos: kernel.program_index(EVENS_PROGRAM), neg: kernel.program_index(ODDS_PROGRAM) };
            return Ok(crate::witness::shav_split(kernel, e, r.pos, r.neg));
        }
        Ok(match self.base {
            Base::Hf => crate::friedberg::h_f(kernel, e),
            Base::Trivial => (e, kernel.empty_index()),
            Base::Broken => (kernel.empty_index(), kernel.empty_index()),
        })
    }
}

/// Which case of the trichotomy the evidence at one checkpoint favours.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictPoint {
    pub g: u64,
    pub case: u8,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct TreeHandle {
    pub a: Index,
    pub e0: Index,
    pub e1: Index,
    pub listing: Listing,
    pub depth: u32,
    state: Arc<Mutex<Tree>>,
}

struct TreeGenerator(Arc<Mutex<Tree>>);

impl HostGenerator for TreeGenerator {
    fn pull(&mut self, ctx: &mut GenContext<'_>) {
        if ctx.pending() > 0 {
            return;
        }
        self.0.lock().expect("tree state poisoned").stage(ctx);
    }
}

/// The sets `W_j` the R- and T-questions range over.
pub fn question_listing(kernel: &Kernel, a: Index, r0: Index) -> Listing {
    Listing::canonical()
        .with(0, kernel.empty_index())
        .with(1, a)
        .with(2, kernel.program_index(ALL_PROGRAM))
        .with(3, r0)
        .with(4, kernel.program_index(EVENS_PROGRAM))
        .with(5, kernel.pad(a))
}

/// Registers the construction, hands `A`'s index to `h`, and returns
/// without stepping.
pub fn attach(kernel: &mut Kernel, h: &Procedure, depth: u32) -> Result<TreeHandle, ConstructionError> {
    let depth = depth.min(MAX_DEPTH);
    let cell: Arc<Mutex<Option<Arc<Mutex<Tree>>>>> = Arc::new(Mutex::new(None));
    let inner = cell.clone();
    let idx = kernel.register_with_sets(
        Box::new(move |ctx: &mut GenContext<'_>| {
            if let Some(tree) = inner.lock().expect("tree cell").as_ref() {
                TreeGenerator(tree.clone()).pull(ctx);
            }
        }),
        4,
    );
    let a = idx[0];
    let zero: Node = "0".parse().expect("node");
    let one: Node = "1".parse().expect("node");
    let listing = question_listing(kernel, a, idx[1]);
    let mut tree = Tree::new(a, listing.clone(), depth, vec![(zero, idx[1], idx[2]), (one, idx[3], idx[4])]);
    let (e0, e1) = h.apply(kernel, a)?;
    tree.halves = [e0, e1];
    let state = Arc::new(Mutex::new(tree));
    *cell.lock().expect("tree cell") = Some(state.clone());
    Ok(TreeHandle { a, e0, e1, listing, depth, state })
}

impl TreeHandle {
    pub(crate) fn with_state<R>(&self, f: impl FnOnce(&Tree) -> R) -> R {
        f(&self.state.lock().expect("tree state poisoned"))
    }

    /// `(global stage, f_n)` for each construction stage `n`.
    pub fn f_history(&self) -> Vec<(u64, Node)> {
        self.with_state(|t| t.f_hist.clone())
    }

    pub fn slots(&self) -> Vec<(Node, Index, Index)> {
        self.with_state(|t| t.slots.iter().map(|(&n, &(r, rt))| (n, r, rt)).collect())
    }

    pub fn markers(&self) -> Vec<(Node, Vec<u64>)> {
        self.with_state(|t| t.markers.iter().map(|(&n, m)| (n, m.iter().copied().collect())).collect())
    }

    /// Balls still on the machine with their nodes.
    pub fn balls(&self) -> Vec<(u64, Node)> {
        let mut v: Vec<(u64, Node)> = self.with_state(|t| t.positions().iter().map(|(&x, &(n, _))| (x, n)).collect());
        v.sort_unstable();
        v
    }

    pub fn header(&self, stages: u64) -> Header {
        Header::Tree {
            a: self.a,
            e: self.a,
            e0: self.e0,
            e1: self.e1,
            stages,
            depth: self.depth,
            listing: self.listing.pairs(),
        }
    }

    /// Decision records in stage order, with the `f` and `enter` lines
    /// filled in from the path history.
    pub fn trace_records(&self) -> Vec<Record> {
        self.with_state(|t| {
            let mut out = Vec::with_capacity(t.records.len() + 2 * t.f_hist.len());
            let mut rest = t.records.iter().peekable();
            for (n, &(g, f)) in t.f_hist.iter().enumerate() {
                let n = n as u64;
                out.push(Record::F { s: n, g, node: f.to_string() });
                let mut late = Vec::new();
                while let Some(r) = rest.next_if(|r| record_stage(r) == Some(n)) {
                    if matches!(r, Record::Chip { .. } | Record::Slot { .. }) {
                        out.push(r.clone());
                    } else {
                        late.push(r.clone());
                    }
                }
                if f.len() >= 1 && n >= 1 {
                    out.push(Record::Enter { s: n, x: n - 1, node: f.prefix(1).to_string() });
                }
                out.extend(late);
            }
            out.extend(rest.cloned());
            out
        })
    }
}

pub(crate) fn record_stage(r: &Record) -> Option<u64> {
    Some(match r {
        Record::Slot { s, .. }
        | Record::F { s, .. }
        | Record::Chip { s, .. }
        | Record::Enter { s, .. }
        | Record::Left { s, .. }
        | Record::Pull { s, .. }
        | Record::Patch { s, .. }
        | Record::Marker { s, .. }
        | Record::DumpOrig { s, .. }
        | Record::DumpExtra { s, .. } => *s,
        _ => return None,
    })
}

/// Evidence at global stage `g` over the window `(g - window, g]`.
///
/// Case 1: the halves overlap, or an element of `A` stays outside both
/// halves (or an element of a half stays outside `A`) for the whole
/// window. Case 2: some positive A-node ends `f` on at least a tenth of
/// the window's construction stages (and at least twice), while `f` lies
/// left of it on at most a hundredth of them. Case 3 otherwise.
pub fn verdict_at(log: &EventLog, a: Index, e0: Index, e1: Index, f_hist: &[(u64, Node)], g: u64, window: u64) -> VerdictPoint {
    let from = g.saturating_sub(window);
    let (small, big) = if log.size_at(e0, g) <= log.size_at(e1, g) { (e0, e1) } else { (e1, e0) };
    if e0 != e1 || log.size_at(e0, g) > 0 {
        let clash = if e0 == e1 {
            log.enumeration(e0).first().map(|&(_, x)| x)
        } else {
            log.enumeration(small).iter().take_while(|(t, _)| *t <= g).map(|&(_, x)| x).find(|&x| log.contains_at(big, x, g))
        };
        if let Some(x) = clash {
            return VerdictPoint { g, case: 1, detail: format!("halves overlap at {x}") };
        }
    }
    let in_half = |x: u64| log.contains_at(e0, x, g) || log.contains_at(e1, x, g);
    let old = |i: Index| log.enumeration(i).iter().take_while(move |(t, _)| *t <= from).map(|&(_, x)| x);
    if let Some(x) = old(a).find(|&x| !in_half(x)) {
        return VerdictPoint { g, case: 1, detail: format!("{x} in A since stage {from} but in neither half") };
    }
    if let Some(x) = old(e0).chain(old(e1)).find(|&x| !log.contains_at(a, x, g)) {
        return VerdictPoint { g, case: 1, detail: format!("{x} in a half since stage {from} but not in A") };
    }
    let lo = f_hist.partition_point(|&(t, _)| t <= from);
    let hi = f_hist.partition_point(|&(t, _)| t <= g);
    let win = &f_hist[lo..hi];
    let mut seen: std::collections::BTreeMap<Node, usize> = Default::default();
    for &(_, f) in win {
        if f.is_positive() {
            *seen.entry(f).or_default() += 1;
        }
    }
    let total = win.len();
    for (&gamma, &count) in &seen {
        let left = win.iter().filter(|&&(_, f)| f.left_of(gamma)).count();
        if count >= 2 && count * 10 >= total && left * 100 <= total {
            return VerdictPoint { g, case: 2, detail: format!("{gamma} ends f {count} of {total} times, left of it {left} times") };
        }
    }
    VerdictPoint { g, case: 3, detail: "no overlap, no lasting miss, no stable positive A-node".into() }
}

/// Verdicts at the 11 checkpoints spanning the last fifth of `0..=stages`,
/// each with window `stages / 10`.
pub fn verdicts(log: &EventLog, h: &TreeHandle, stages: u64) -> Vec<VerdictPoint> {
    verdicts_from(log, h.a, h.e0, h.e1, &h.f_history(), stages)
}

/// Verdicts at the eleven checkpoints spread over the last fifth of the run.
pub fn verdicts_from(log: &EventLog, a: Index, e0: Index, e1: Index, f: &[(u64, Node)], stages: u64) -> Vec<VerdictPoint> {
    let window = (stages / 10).max(1);
    (0..=10u64)
        .map(|k| stages - stages / 5 + k * (stages / 5) / 10)
        .map(|g| verdict_at(log, a, e0, e1, f, g, window))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Diagonalization {
    pub handle: TreeHandle,
    pub stages: u64,
    pub points: Vec<VerdictPoint>,
}

impl Diagonalization {
    pub fn verdict(&self) -> &VerdictPoint {
        self.points.last().expect("at least one checkpoint")
    }

    /// The same case at every checkpoint.
    pub fn stable(&self) -> bool {
        self.points.iter().all(|p| p.case == self.verdict().case)
    }

    pub fn verdict_records(&self) -> Vec<Record> {
        self.points
            .iter()
            .map(|p| Record::Verdict { s: self.stages, g: p.g, case: p.case, detail: p.detail.clone() })
            .collect()
    }

    /// Decision records followed by the verdict lines.
    pub fn trace_records(&self) -> Vec<Record> {
        let mut out = self.handle.trace_records();
        out.extend(self.verdict_records());
        out
    }
}

/// Builds `A` against `h` through global stage `stages`.
pub fn diagonalize(kernel: &mut Kernel, h: &Procedure, stages: u64, depth: u32) -> Result<Diagonalization, ConstructionError> {
    let handle = attach(kernel, h, depth)?;
    kernel.run_through(stages)?;
    let points = verdicts(kernel.log(), &handle, stages);
    Ok(Diagonalization { handle, stages, points })
}
