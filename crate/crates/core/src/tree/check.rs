//! Structural invariants of a finished tree run, read back from its trace.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use super::node::{Node, MAX_DEPTH};
use super::{e_state_masks, pre};
use crate::kernel::{EventLog, Index};
use crate::trace::{Header, Record, Trace};

#[derive(Debug, Clone, Default, Serialize)]
pub struct Violations {
    pub f_kind: u64,
    pub f_length: u64,
    pub ball_bound: u64,
    pub ball_reentry: u64,
    pub markers: u64,
    pub requests: u64,
    pub chips: u64,
    pub partition: u64,
    pub patch: u64,
}

impl Violations {
    pub fn total(&self) -> u64 {
        self.f_kind
            + self.f_length
            + self.ball_bound
            + self.ball_reentry
            + self.markers
            + self.requests
            + self.chips
            + self.partition
            + self.patch
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct TreeReport {
    pub stages: u64,
    pub construction_stages: u64,
    pub violations: Violations,
    /// First few violations, for humans.
    pub examples: Vec<String>,
    /// Elements of `R̃_δ` that entered `A` but are in neither `R_α` nor
    /// `R̃_α`, per R-node `α`, at the last stage.
    pub uncovered: BTreeMap<String, usize>,
}

impl TreeReport {
    pub fn ok(&self) -> bool {
        self.violations.total() == 0
    }

    fn flag(&mut self, what: impl FnOnce(&mut Violations) -> &mut u64, msg: impl FnOnce() -> String) {
        *what(&mut self.violations) += 1;
        if self.examples.len() < 20 {
            self.examples.push(msg());
        }
    }
}

fn node(s: &str) -> Node {
    s.parse().unwrap_or(Node::ROOT)
}

/// Checks a tree trace: path shape, ball bounds, request discipline,
/// marker contiguity of original dumps, chip monotonicity and the
/// partition ledger.
pub fn check_trace(trace: &Trace) -> TreeReport {
    let mut rep = TreeReport::default();
    let Some(Header::Tree { a, stages, depth, .. }) = trace.header.clone() else {
        rep.examples.push("not a tree trace".into());
        rep.violations.f_kind += 1;
        return rep;
    };
    rep.stages = stages;
    let log = trace.log();
    let masks = e_state_masks();
    let word = |x: u64, s: i64| -> u64 {
        log.memberships(x)
            .iter()
            .filter(|&&(_, t)| (t as i64) <= s)
            .filter_map(|(i, _)| masks.get(i))
            .fold(0, |w, m| w | m)
    };

    let mut stage_g: HashMap<u64, u64> = HashMap::new();
    let mut slots: BTreeMap<Node, (Index, Index)> = BTreeMap::new();
    let mut requests: BTreeMap<Node, BTreeSet<u64>> = BTreeMap::new();
    let mut chips: HashMap<Node, u64> = HashMap::new();
    let mut pulled: Vec<u64> = Vec::new();
    let mut dumped_now: BTreeSet<u64> = BTreeSet::new();
    let mut pulls_now: BTreeMap<Node, Vec<u64>> = BTreeMap::new();
    let mut cur: Option<u64> = None;
    let cap_depth = depth.min(MAX_DEPTH);

    let in_a_before = |x: u64, g: u64| g > 0 && log.contains_at(a, x, g - 1);

    for (_, rec) in trace.decisions() {
        if let Some(s) = super::record_stage(rec) {
            if cur != Some(s) {
                cur = Some(s);
                dumped_now.clear();
                pulls_now.clear();
                pulled.clear();
            }
        }
        match rec {
            Record::Slot { node: nd, r, rt, .. } => {
                slots.insert(node(nd), (*r, *rt));
            }
            Record::F { s, g, node: nd } => {
                let f = node(nd);
                stage_g.insert(*s, *g);
                rep.construction_stages = rep.construction_stages.max(s + 1);
                if !(f.is_root() || f.is_resting()) {
                    rep.flag(|v| &mut v.f_kind, || format!("stage {s}: f = {f} is not resting"));
                }
                let by_stage = s.saturating_sub(1).saturating_mul(s.saturating_sub(1));
                if f.len() as u64 > by_stage || f.len() > cap_depth {
                    rep.flag(|v| &mut v.f_length, || format!("stage {s}: |f| = {} too long", f.len()));
                }
                for p in f.prefixes().filter(|p| p.is_resting()) {
                    requests.entry(p).or_default().insert(*s);
                }
                let void: Vec<Node> = requests.keys().filter(|&&k| f.left_of(k)).copied().collect();
                for k in void {
                    requests.remove(&k);
                }
            }
            Record::Chip { s, node: nd, count } => {
                let prev = chips.insert(node(nd), *count).unwrap_or(0);
                if *count < prev {
                    rep.flag(|v| &mut v.chips, || format!("stage {s}: chip at {nd} fell from {prev} to {count}"));
                }
            }
            Record::Enter { s, x, node: nd } => {
                let g = stage_g.get(s).copied().unwrap_or(0);
                place(&mut rep, *s, *x, node(nd), in_a_before(*x, g) || dumped_now.contains(x));
            }
            Record::Left { s, to, balls, .. } => {
                let g = stage_g.get(s).copied().unwrap_or(0);
                for &x in balls {
                    place(&mut rep, *s, x, node(to), in_a_before(x, g) || dumped_now.contains(&x));
                }
            }
            Record::Pull { s, node: nd, request, x0, x1, extra } => {
                let at = node(nd);
                let g = stage_g.get(s).copied().unwrap_or(0);
                let least = requests.get(&at).and_then(|q| q.first().copied());
                if least != Some(*request) || !pulled.is_empty() {
                    rep.flag(|v| &mut v.requests, || format!("stage {s}: pull at {nd} used request {request}, expected {least:?}"));
                }
                if let Some(q) = requests.get_mut(&at) {
                    q.remove(request);
                }
                for &x in [*x0, *x1].iter().chain(extra) {
                    place(&mut rep, *s, x, at, in_a_before(x, g) || dumped_now.contains(&x));
                    pulled.push(x);
                }
                if at.is_r_node() {
                    let list = pulls_now.entry(at).or_default();
                    list.push(*x0);
                    list.extend(extra);
                }
            }
            Record::Patch { s, node: nd, x } => {
                let g = stage_g.get(s).copied().unwrap_or(0);
                if !in_a_before(*x, g) {
                    rep.flag(|v| &mut v.patch, || format!("stage {s}: patched {x} into R_{nd} before it reached A"));
                }
            }
            Record::DumpOrig { s, node: nd, e, i, balls } => {
                let at = node(nd);
                let g = stage_g.get(s).copied().unwrap_or(0);
                let Some(&(r, _)) = slots.get(&at) else {
                    rep.flag(|v| &mut v.markers, || format!("stage {s}: dump at {nd} without slots"));
                    continue;
                };
                let mut markers: BTreeSet<u64> = if g == 0 { BTreeSet::new() } else { log.w_at(r, g - 1) };
                markers.extend(pulls_now.get(&at).into_iter().flatten().copied());
                markers.retain(|&x| !in_a_before(x, g) && !dumped_now.contains(&x));
                let list: Vec<u64> = markers.into_iter().collect();
                let want = list.get(*e as usize..*i as usize).map(|w| w.to_vec());
                let states_ok = want.as_ref().is_some_and(|_| {
                    let se = pre(*e, word(list[*e as usize], g as i64 - 1));
                    let si = list.get(*i as usize).map(|&x| pre(*e, word(x, g as i64 - 1)));
                    si.is_some_and(|si| si > se)
                        && (*e as usize + 1..*i as usize).all(|k| pre(*e, word(list[k], g as i64 - 1)) <= se)
                });
                if want.as_deref() != Some(balls.as_slice()) || !states_ok || e >= i || *i + 1 >= *s {
                    rep.flag(|v| &mut v.markers, || format!("stage {s}: original dump at {nd} of {balls:?} is not markers {e}..{i}"));
                }
                dumped_now.extend(balls.iter().copied());
            }
            Record::DumpExtra { x, .. } => {
                dumped_now.insert(*x);
            }
            _ => {}
        }
    }

    partition(&mut rep, &log, a, &slots, stages);
    rep
}

fn place(rep: &mut TreeReport, s: u64, x: u64, at: Node, in_a: bool) {
    if (at.len() as u64) > x.saturating_mul(x) {
        rep.flag(|v| &mut v.ball_bound, || format!("stage {s}: ball {x} placed at {at}, deeper than {x}²"));
    }
    if in_a {
        rep.flag(|v| &mut v.ball_reentry, || format!("stage {s}: ball {x} is already in A"));
    }
}

/// `R_β` for R-nodes `β ⊆ α` and `R̃_α` must be pairwise disjoint.
fn partition(rep: &mut TreeReport, log: &EventLog, a: Index, slots: &BTreeMap<Node, (Index, Index)>, s: u64) {
    for (&alpha, &(r, rt)) in slots {
        let mut parts: Vec<(String, BTreeSet<u64>)> = alpha
            .prefixes()
            .filter(|b| b.is_r_node())
            .filter_map(|b| slots.get(&b).map(|&(rb, _)| (format!("R_{b}"), log.w_at(rb, s))))
            .collect();
        parts.push((format!("R̃_{alpha}"), log.w_at(rt, s)));
        for i in 0..parts.len() {
            for j in i + 1..parts.len() {
                if let Some(x) = parts[i].1.intersection(&parts[j].1).next() {
                    let (p, q) = (parts[i].0.clone(), parts[j].0.clone());
                    rep.flag(|v| &mut v.partition, || format!("{x} is in both {p} and {q}"));
                }
            }
        }
        let delta = alpha.r_parent();
        let rt_delta = (!delta.is_root()).then(|| slots.get(&delta).map(|p| p.1)).flatten();
        let uncovered = log
            .enumeration(a)
            .iter()
            .take_while(|(t, _)| *t <= s)
            .filter(|&&(ta, x)| rt_delta.is_none_or(|i| log.entry_stage(i, x).is_some_and(|t| t < ta)))
            .filter(|&&(_, x)| !log.contains_at(r, x, s) && !log.contains_at(rt, x, s))
            .count();
        rep.uncovered.insert(alpha.to_string(), uncovered);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{Corpus, Kernel};
    use crate::trace::Trace;
    use crate::tree::{diagonalize, Base, Procedure};

    fn trace_of(base: Base, stages: u64) -> Trace {
        let mut k = Kernel::new(Corpus::standard(64));
        let d = diagonalize(&mut k, &Procedure::new(base), stages, 16).unwrap();
        let mut t = Trace { header: Some(d.handle.header(stages)), stepped: stages + 1, records: Vec::new() };
        for ev in k.log().events() {
            t.records.push((0, Record::Event { s: ev.s, e: ev.e, x: ev.x }));
        }
        t.records.extend(d.trace_records().into_iter().map(|r| (0, r)));
        t
    }

    #[test]
    fn clean_run_has_no_violations() {
        let rep = check_trace(&trace_of(Base::Hf, 30_000));
        assert!(rep.ok(), "{:?}", rep.examples);
        assert!(rep.construction_stages > 100);
    }

    #[test]
    fn moved_ball_is_caught() {
        let mut t = trace_of(Base::Trivial, 5_000);
        let pos = t.records.iter().position(|(_, r)| matches!(r, Record::Enter { .. })).unwrap();
        if let Record::Enter { s, x, .. } = t.records[pos].1.clone() {
            t.records[pos].1 = Record::Enter { s, x, node: "0".repeat(16) };
        }
        let rep = check_trace(&t);
        assert_eq!(rep.violations.ball_bound, 1);
    }
}
