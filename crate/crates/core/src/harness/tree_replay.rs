//! Slow re-simulation of the tree construction from its trace.
//!
//! State is kept as plain sets recomputed from the log at every use; only
//! the slot indices are taken from the trace, since they name sets rather
//! than decide anything.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use super::Divergence;
use crate::hk::Listing;
use crate::kernel::{EventLog, Index};
use crate::trace::{Header, Record, Trace};
use crate::tree::{e_state_masks, isqrt, pre, question_at, verdicts_from, Node, Question, E_STATES, MAX_DEPTH};

const R_POS: u8 = 0;
const RT_POS: u8 = 1;
const FREE: u8 = 2;
const HELD: u8 = 3;

#[derive(Default)]
struct TState {
    best: Option<usize>,
    frozen: bool,
    count: u64,
}

struct Naive<'a> {
    log: &'a EventLog,
    a: Index,
    halves: [Index; 2],
    listing: Listing,
    depth: u32,
    masks: HashMap<Index, u64>,
    slots: BTreeMap<Node, (Index, Index)>,
    f: Vec<Node>,
    last: HashMap<Node, u64>,
    recorded: HashMap<Node, u64>,
    tstate: HashMap<Node, TState>,
    requests: BTreeMap<Node, BTreeSet<u64>>,
    pos: BTreeMap<u64, (Node, u8)>,
    fresh: HashSet<(Index, u64)>,
    g: u64,
    n: u64,
    out: Vec<Record>,
}

impl<'a> Naive<'a> {
    /// Membership at the start of the current stage, plus this stage's own additions.
    fn has(&self, set: Index, x: u64) -> bool {
        (self.g > 0 && self.log.contains_at(set, x, self.g - 1)) || self.fresh.contains(&(set, x))
    }

    fn before(&self, set: Index, x: u64) -> Option<u64> {
        self.log.entry_stage(set, x).filter(|&t| self.g > 0 && t < self.g)
    }

    fn members(&self, set: Index) -> BTreeSet<u64> {
        let mut m = if self.g == 0 { BTreeSet::new() } else { self.log.w_at(set, self.g - 1) };
        m.extend(self.fresh.iter().filter(|(i, _)| *i == set).map(|&(_, x)| x));
        m
    }

    fn put(&mut self, set: Index, x: u64) {
        if !self.has(set, x) {
            self.fresh.insert((set, x));
        }
    }

    fn rt_of(&self, delta: Node) -> Option<Index> {
        (!delta.is_root()).then(|| self.slots[&delta].1)
    }

    fn r_chip(&self, j: u64, delta: Node) -> u64 {
        let rt = self.rt_of(delta);
        self.log
            .enumeration(self.listing.get(j))
            .iter()
            .filter(|&&(t, _)| t < self.g)
            .filter_map(|&(t, x)| match rt {
                None => Some((t, x)),
                Some(r) => self.before(r, x).map(|tr| (t.max(tr), x)),
            })
            .filter(|&(joint, x)| self.before(self.a, x).is_none_or(|ta| ta > joint))
            .count() as u64
    }

    fn t_chip(&mut self, at: Node, j: u64, b: u8, beta: Node) -> u64 {
        let (w, web) = (self.listing.get(j), self.halves[b as usize]);
        let (r, rt) = self.slots[&beta];
        let mut outside = vec![rt];
        outside.extend(beta.prefixes().filter(|p| p.is_r_node() && *p != beta).map(|p| self.slots[&p].0));
        let st = self.tstate.remove(&at).unwrap_or_default();
        let st = self.t_visit(st, w, web, r, &outside);
        let c = st.count;
        self.tstate.insert(at, st);
        c
    }

    fn t_visit(&self, mut st: TState, w: Index, web: Index, r: Index, outside: &[Index]) -> TState {
        if st.frozen {
            return st;
        }
        let inw = |x: u64| self.before(w, x).is_some();
        let violated = self.log.enumeration(w).iter().filter(|(t, _)| *t < self.g).any(|&(_, x)| {
            (self.before(web, x).is_some() && self.before(r, x).is_some()) || outside.iter().any(|&o| self.before(o, x).is_some())
        });
        if violated {
            st.frozen = true;
            return st;
        }
        let members = if self.g == 0 { BTreeSet::new() } else { self.log.w_at(r, self.g - 1) };
        let least_open = members.iter().find(|&&x| !inw(x) && self.before(web, x).is_none());
        let m = match least_open {
            None => members.len(),
            Some(&u) => members.range(..u).count(),
        };
        match st.best {
            None => st.best = Some(m),
            Some(b) if m > b => {
                st.best = Some(m);
                st.count += 1;
            }
            _ => {}
        }
        st
    }

    fn walk(&mut self, new_slots: &HashMap<Node, (Index, Index)>) -> Result<Node, String> {
        let sq = isqrt(self.depth.min(MAX_DEPTH));
        let by_stage = self.n.saturating_sub(1).saturating_mul(self.n.saturating_sub(1));
        let cap = (sq * sq).min(by_stage.min(u32::MAX as u64) as u32);
        let mut at = Node::ROOT;
        loop {
            if at.is_positive() {
                return Ok(at);
            }
            if at.is_r_node() && !self.slots.contains_key(&at) {
                let Some(&(r, rt)) = new_slots.get(&at) else {
                    return Err(format!("walk reached {at} but no slot was recorded"));
                };
                self.slots.insert(at, (r, rt));
                self.out.push(Record::Slot { s: self.n, node: at.to_string(), r, rt });
            }
            let count = match question_at(at) {
                Question::R { j, delta } => self.r_chip(j, delta),
                Question::T { j, b, beta, .. } => self.t_chip(at, j, b, beta),
            };
            if self.recorded.get(&at).copied().unwrap_or(0) != count {
                self.recorded.insert(at, count);
                self.out.push(Record::Chip { s: self.n, node: at.to_string(), count });
            }
            let before = self.last.insert(at, count).unwrap_or(0);
            if at.len() >= cap {
                return Ok(at);
            }
            at = at.child(u8::from(before != count));
        }
    }

    fn in_region(&self, x: u64, alpha: Node, delta: Node) -> bool {
        self.pos.get(&x).is_some_and(|&(nd, kind)| {
            (nd == delta && (kind == RT_POS || (kind == FREE && !delta.is_root())))
                || (nd == alpha && kind == FREE)
                || (nd >= alpha.subtree_end() && nd < delta.subtree_end())
        })
    }

    fn try_pull(&mut self, alpha: Node) -> bool {
        let delta = alpha.r_parent();
        let wj = (alpha.is_r_node() && alpha.last_bit() == Some(1)).then(|| self.listing.get(isqrt(alpha.len()) as u64));
        let own = self.slots.get(&alpha).copied();
        let base_ok = |x: u64| {
            x > alpha.len() as u64
                && self.rt_of(delta).is_none_or(|rt| self.has(rt, x))
                && own.is_none_or(|(r, rt)| !self.has(r, x) && !self.has(rt, x))
        };
        let region: Vec<u64> = self.pos.keys().copied().filter(|&x| self.in_region(x, alpha, delta)).collect();
        let best: Vec<u64> =
            region.iter().copied().filter(|&x| base_ok(x) && wj.is_none_or(|i| self.before(i, x).is_some())).take(2).collect();
        if best.len() < 2 {
            return false;
        }
        let (x0, x1) = (best[0], best[1]);
        let extra: Vec<u64> = region.iter().copied().filter(|&y| y < x1 && y != x0 && base_ok(y)).collect();
        let q = self.requests.get_mut(&alpha).expect("request");
        let request = q.pop_first().expect("request");
        if q.is_empty() {
            self.requests.remove(&alpha);
        }
        match own {
            Some((r, rt)) => {
                self.pos.insert(x0, (alpha, R_POS));
                self.pos.insert(x1, (alpha, RT_POS));
                self.put(r, x0);
                self.put(rt, x1);
                for &y in &extra {
                    self.pos.insert(y, (alpha, R_POS));
                    self.put(r, y);
                }
            }
            None => {
                for &y in [x0, x1].iter().chain(&extra) {
                    self.pos.insert(y, (alpha, HELD));
                }
            }
        }
        self.out.push(Record::Pull { s: self.n, node: alpha.to_string(), request, x0, x1, extra });
        true
    }

    fn patch(&mut self, alpha: Node) {
        let (r, rt) = self.slots[&alpha];
        let rt_delta = self.rt_of(alpha.r_parent());
        let entries: Vec<(u64, u64)> = self.log.enumeration(self.a).iter().copied().filter(|(t, _)| *t < self.g).collect();
        for (ta, x) in entries {
            let from = rt_delta.is_none_or(|i| self.log.entry_stage(i, x).is_some_and(|t| t < ta));
            if from && !self.has(r, x) && !self.has(rt, x) {
                self.put(r, x);
                self.out.push(Record::Patch { s: self.n, node: alpha.to_string(), x });
            }
        }
    }

    fn markers(&self, alpha: Node) -> Vec<u64> {
        let r = self.slots[&alpha].0;
        self.members(r).into_iter().filter(|&x| !self.has(self.a, x)).collect()
    }

    fn word(&self, x: u64) -> u64 {
        self.log
            .memberships(x)
            .iter()
            .filter(|&&(_, t)| t < self.g)
            .filter_map(|(i, _)| self.masks.get(i))
            .fold(0, |w, m| w | m)
    }

    fn dump(&mut self, x: u64) {
        self.pos.remove(&x);
        let a = self.a;
        self.put(a, x);
    }

    fn maximal(&mut self, alpha: Node) -> Option<u64> {
        let list = self.markers(alpha);
        let w: Vec<u64> = list.iter().map(|&x| self.word(x)).collect();
        let limit = (E_STATES as usize).min(list.len()).min(self.n as usize);
        for e in 0..limit {
            let mine = pre(e as u64, w[e]);
            let Some(i) = (e + 1..list.len()).find(|&i| pre(e as u64, w[i]) > mine) else {
                continue;
            };
            if (i as u64) + 1 >= self.n {
                continue;
            }
            let balls = list[e..i].to_vec();
            self.out.push(Record::Marker {
                s: self.n,
                node: alpha.to_string(),
                e: e as u64,
                i: i as u64,
                state_e: mine,
                state_i: pre(e as u64, w[i]),
            });
            for &x in &balls {
                self.dump(x);
            }
            self.out.push(Record::DumpOrig { s: self.n, node: alpha.to_string(), e: e as u64, i: i as u64, balls });
            return Some(e as u64);
        }
        None
    }

    fn extra(&mut self, gamma: Node, orig: &HashMap<Node, u64>) {
        if !gamma.is_positive() {
            return;
        }
        let Question::T { beta, .. } = question_at(gamma.prefix(gamma.len() - 1)) else {
            return;
        };
        let n = self.n as usize;
        let left = self.f[..n].iter().rposition(|&f| f.left_of(gamma)).unwrap_or(0) as u64;
        let t = left.max(gamma.len() as u64);
        for alpha in gamma.prefixes().filter(|p| p.is_r_node() && *p != gamma && *p != beta) {
            if orig.get(&alpha).is_some_and(|&e| e <= t) {
                continue;
            }
            let Some(&x) = self.markers(alpha).get(t as usize) else {
                continue;
            };
            self.dump(x);
            self.out.push(Record::DumpExtra { s: self.n, gamma: gamma.to_string(), node: alpha.to_string(), t, x });
        }
    }

    /// Re-runs construction stage `self.n` at global stage `g`.
    fn stage(&mut self, g: u64, new_slots: &HashMap<Node, (Index, Index)>) -> Result<Vec<Record>, String> {
        self.g = g;
        self.fresh.clear();
        self.out.clear();
        let n = self.n;
        let mut out = vec![Record::F { s: n, g, node: String::new() }];
        let f = self.walk(new_slots)?;
        out[0] = Record::F { s: n, g, node: f.to_string() };
        out.append(&mut self.out);
        self.f.push(f);

        for p in f.prefixes().filter(|p| p.is_resting()) {
            self.requests.entry(p).or_default().insert(n);
        }
        self.requests.retain(|&k, _| k <= f);

        if f.len() >= 1 && n >= 1 {
            self.pos.insert(n - 1, (f.prefix(1), FREE));
            out.push(Record::Enter { s: n, x: n - 1, node: f.prefix(1).to_string() });
        }

        let mut right: BTreeMap<(Node, u8), Vec<u64>> = BTreeMap::new();
        for (&x, &(nd, kind)) in &self.pos {
            if nd >= f.subtree_end() {
                right.entry((nd, kind)).or_default().push(x);
            }
        }
        for ((from, _), balls) in right {
            let to = f.prefix(f.common(from) + 1);
            for &x in &balls {
                self.pos.insert(x, (to, FREE));
            }
            self.out.push(Record::Left { s: n, from: from.to_string(), to: to.to_string(), balls });
        }

        let asked: Vec<Node> = self.requests.keys().copied().collect();
        for alpha in asked {
            if self.try_pull(alpha) {
                break;
            }
        }

        let on_f: Vec<Node> = f.prefixes().filter(|p| p.is_r_node()).collect();
        for &alpha in &on_f {
            self.patch(alpha);
        }
        let mut orig = HashMap::new();
        for &alpha in &on_f {
            if let Some(e) = self.maximal(alpha) {
                orig.insert(alpha, e);
            }
        }
        self.extra(f, &orig);
        out.append(&mut self.out);
        self.n += 1;
        Ok(out)
    }
}

/// Replays a tree trace and reports at most one divergence per stage.
pub fn tree(trace: &Trace) -> Vec<Divergence> {
    let Some(Header::Tree { a, e0, e1, depth, listing, stages, .. }) = trace.header.clone() else {
        return vec![Divergence { line: 0, stage: 0, what: "not a tree trace".into() }];
    };
    let log = trace.log();
    let mut by_stage: BTreeMap<u64, Vec<(usize, Record)>> = BTreeMap::new();
    let mut verdict_lines: Vec<(usize, Record)> = Vec::new();
    let mut out = Vec::new();
    for (line, rec) in trace.decisions() {
        match crate::tree::record_stage(rec) {
            Some(s) => by_stage.entry(s).or_default().push((*line, rec.clone())),
            None if matches!(rec, Record::Verdict { .. }) => verdict_lines.push((*line, rec.clone())),
            None => out.push(Divergence { line: *line, stage: 0, what: format!("unexpected {} record", rec.kind()) }),
        }
    }
    let mut st = Naive {
        log: &log,
        a,
        halves: [e0, e1],
        listing: Listing::from_pairs(&listing),
        depth,
        masks: e_state_masks(),
        slots: BTreeMap::new(),
        f: Vec::new(),
        last: HashMap::new(),
        recorded: HashMap::new(),
        tstate: HashMap::new(),
        requests: BTreeMap::new(),
        pos: BTreeMap::new(),
        fresh: HashSet::new(),
        g: 0,
        n: 0,
        out: Vec::new(),
    };
    let mut f_hist: Vec<(u64, Node)> = Vec::new();
    for (n, recs) in &by_stage {
        let first = recs[0].0;
        if *n != st.n {
            out.push(Divergence { line: first, stage: *n, what: format!("expected construction stage {}", st.n) });
            break;
        }
        let Some(g) = recs.iter().find_map(|(_, r)| match r {
            Record::F { g, .. } => Some(*g),
            _ => None,
        }) else {
            out.push(Divergence { line: first, stage: *n, what: "stage has no f record".into() });
            break;
        };
        let new_slots: HashMap<Node, (Index, Index)> = recs
            .iter()
            .filter_map(|(_, r)| match r {
                Record::Slot { node, r, rt, .. } => node.parse().ok().map(|nd| (nd, (*r, *rt))),
                _ => None,
            })
            .collect();
        let want = match st.stage(g, &new_slots) {
            Ok(w) => w,
            Err(what) => {
                out.push(Divergence { line: first, stage: *n, what });
                break;
            }
        };
        f_hist.push((g, *st.f.last().expect("f")));
        let k = recs.iter().zip(&want).position(|((_, got), w)| got != w).unwrap_or(recs.len().min(want.len()));
        if k < recs.len() || k < want.len() {
            let line = recs.get(k).map_or(recs[recs.len() - 1].0, |r| r.0);
            let what = match (recs.get(k), want.get(k)) {
                (Some((_, got)), Some(w)) => format!("recorded {got:?}, expected {w:?}"),
                (Some((_, got)), None) => format!("unexpected {got:?}"),
                (None, Some(w)) => format!("missing {w:?}"),
                (None, None) => unreachable!(),
            };
            out.push(Divergence { line, stage: *n, what });
        }
    }
    let expected = verdicts_from(&log, a, e0, e1, &f_hist, stages);
    for (line, rec) in verdict_lines {
        let Record::Verdict { g, case, detail, .. } = &rec else { continue };
        match expected.iter().find(|p| p.g == *g) {
            Some(p) if p.case == *case && p.detail == *detail => {}
            other => out.push(Divergence {
                line,
                stage: *g,
                what: format!("verdict {case} ({detail}), expected {:?}", other.map(|p| (p.case, &p.detail))),
            }),
        }
    }
    out
}
