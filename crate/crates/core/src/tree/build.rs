//! One stage of the tree construction.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::ops::Bound::{Excluded, Unbounded};

use super::chips::{Chip, RChip, TChip};
use super::node::{question_at, Node, Question};
use crate::hk::Listing;
use crate::kernel::{canonical, EventLog, GenContext, Index};
use crate::trace::Record;

pub(crate) const R_POS: u8 = 0;
pub(crate) const RT_POS: u8 = 1;
pub(crate) const FREE: u8 = 2;
pub(crate) const HELD: u8 = 3;

/// Number of `W_i` tracked in e-states.
pub const E_STATES: u64 = 64;

/// `σ(e, x)` as the top `e + 1` bits of the e-state word.
pub fn pre(e: u64, w: u64) -> u64 {
    w >> (63 - e)
}

/// Bit masks of the e-state word, keyed by the sets they watch.
pub fn e_state_masks() -> HashMap<Index, u64> {
    let mut masks: HashMap<Index, u64> = HashMap::new();
    for i in 0..E_STATES {
        *masks.entry(canonical(Index(i))).or_default() |= 1 << (63 - i);
    }
    masks
}

#[derive(Debug)]
pub(crate) struct Tree {
    pub a: Index,
    pub halves: [Index; 2],
    pub listing: Listing,
    pub depth: u32,
    pub slots: BTreeMap<Node, (Index, Index)>,
    spare: Vec<(Node, Index, Index)>,
    own: HashMap<Index, HashSet<u64>>,
    pub n: u64,
    /// `(global stage, f_n)` for every construction stage `n`.
    pub f_hist: Vec<(u64, Node)>,
    chips: HashMap<Node, Chip>,
    last_chip: HashMap<Node, u64>,
    recorded: HashMap<Node, u64>,
    pub requests: BTreeMap<Node, BTreeSet<u64>>,
    pos: HashMap<u64, (Node, u8)>,
    groups: BTreeMap<(Node, u8), BTreeSet<u64>>,
    versions: HashMap<Node, u64>,
    memo: HashMap<Node, (u64, usize)>,
    patched: HashMap<Node, usize>,
    pub markers: BTreeMap<Node, BTreeSet<u64>>,
    marker_of: HashMap<u64, Vec<Node>>,
    dirty: HashSet<Node>,
    /// Multiset of marker words per R-node.
    wordsets: HashMap<Node, BTreeMap<u64, u32>>,
    words: HashMap<u64, u64>,
    masks: HashMap<Index, u64>,
    scanned: u64,
    left_cache: HashMap<Node, (usize, u64)>,
    pub records: Vec<Record>,
}

impl Tree {
    pub fn new(a: Index, listing: Listing, depth: u32, spare: Vec<(Node, Index, Index)>) -> Self {
        Tree {
            a,
            halves: [a, a],
            listing,
            depth,
            slots: BTreeMap::new(),
            spare,
            own: HashMap::new(),
            n: 0,
            f_hist: Vec::new(),
            chips: HashMap::new(),
            last_chip: HashMap::new(),
            recorded: HashMap::new(),
            requests: BTreeMap::new(),
            pos: HashMap::new(),
            groups: BTreeMap::new(),
            versions: HashMap::new(),
            memo: HashMap::new(),
            patched: HashMap::new(),
            markers: BTreeMap::new(),
            marker_of: HashMap::new(),
            dirty: HashSet::new(),
            wordsets: HashMap::new(),
            words: HashMap::new(),
            masks: e_state_masks(),
            scanned: 0,
            left_cache: HashMap::new(),
            records: Vec::new(),
        }
    }

    /// Balls on the machine with their positions.
    pub fn positions(&self) -> &HashMap<u64, (Node, u8)> {
        &self.pos
    }

    fn has(&self, set: Index, x: u64) -> bool {
        self.own.get(&set).is_some_and(|s| s.contains(&x))
    }

    fn put(&mut self, ctx: &mut GenContext<'_>, set: Index, x: u64) {
        if self.own.entry(set).or_default().insert(x) {
            ctx.emit(set, x);
        }
    }

    fn slot(&mut self, node: Node, ctx: &mut GenContext<'_>) -> (Index, Index) {
        if let Some(&s) = self.slots.get(&node) {
            return s;
        }
        let (r, rt) = match self.spare.iter().position(|&(nd, _, _)| nd == node) {
            Some(i) => {
                let (_, r, rt) = self.spare.remove(i);
                (r, rt)
            }
            None => (ctx.new_set(), ctx.new_set()),
        };
        self.slots.insert(node, (r, rt));
        self.records.push(Record::Slot { s: self.n, node: node.to_string(), r, rt });
        (r, rt)
    }

    /// `R̃_δ`, or `None` for `δ = λ` where it is all of ℕ.
    fn rt_of(&self, delta: Node) -> Option<Index> {
        (!delta.is_root()).then(|| self.slots[&delta].1)
    }

    fn in_rt(&self, delta: Node, x: u64) -> bool {
        self.rt_of(delta).is_none_or(|rt| self.has(rt, x))
    }

    fn chip_for(&self, node: Node) -> Chip {
        match question_at(node) {
            Question::R { j, delta } => Chip::R(RChip::new(self.listing.get(j), self.rt_of(delta), self.a)),
            Question::T { j, b, beta, .. } => {
                let (r, rt) = self.slots[&beta];
                let mut outside = vec![rt];
                outside.extend(beta.prefixes().filter(|g| g.is_r_node() && *g != beta).map(|g| self.slots[&g].0));
                Chip::T(TChip::new(self.listing.get(j), self.halves[b as usize], r, outside))
            }
        }
    }

    fn cap(&self, n: u64) -> u32 {
        let sq = super::node::isqrt(self.depth.min(super::node::MAX_DEPTH));
        let by_stage = n.saturating_sub(1).saturating_mul(n.saturating_sub(1));
        (sq * sq).min(by_stage.min(u32::MAX as u64) as u32)
    }

    fn walk(&mut self, ctx: &mut GenContext<'_>, log: &EventLog) -> Node {
        let cap = self.cap(self.n);
        let mut at = Node::ROOT;
        loop {
            if at.is_positive() {
                return at;
            }
            if at.is_r_node() {
                self.slot(at, ctx);
            }
            if !self.chips.contains_key(&at) {
                let c = self.chip_for(at);
                self.chips.insert(at, c);
            }
            let count = self.chips.get_mut(&at).expect("chip").update(log);
            if self.recorded.get(&at).copied().unwrap_or(0) != count {
                self.recorded.insert(at, count);
                self.records.push(Record::Chip { s: self.n, node: at.to_string(), count });
            }
            let before = self.last_chip.insert(at, count).unwrap_or(0);
            if at.len() >= cap {
                return at;
            }
            at = at.child(u8::from(before != count));
        }
    }

    fn place(&mut self, x: u64, node: Node, kind: u8) {
        if let Some(old) = self.pos.insert(x, (node, kind)) {
            self.groups.get_mut(&old).map(|g| g.remove(&x));
        }
        self.groups.entry((node, kind)).or_default().insert(x);
        for p in node.prefixes().filter(|p| p.is_root() || p.is_r_node()) {
            *self.versions.entry(p).or_default() += 1;
        }
    }

    fn lift(&mut self, x: u64) {
        if let Some(old) = self.pos.remove(&x) {
            self.groups.get_mut(&old).map(|g| g.remove(&x));
        }
    }

    fn dump(&mut self, ctx: &mut GenContext<'_>, x: u64) {
        self.lift(x);
        let a = self.a;
        self.put(ctx, a, x);
        let w = self.word(x);
        for node in self.marker_of.remove(&x).unwrap_or_default() {
            if let Some(m) = self.markers.get_mut(&node) {
                m.remove(&x);
            }
            self.unweigh(node, w);
            self.dirty.insert(node);
        }
    }

    fn add_marker(&mut self, node: Node, x: u64) {
        if self.markers.entry(node).or_default().insert(x) {
            self.marker_of.entry(x).or_default().push(node);
            let w = self.word(x);
            *self.wordsets.entry(node).or_default().entry(w).or_default() += 1;
            self.dirty.insert(node);
        }
    }

    fn word(&self, x: u64) -> u64 {
        self.words.get(&x).copied().unwrap_or(0)
    }

    fn unweigh(&mut self, node: Node, w: u64) {
        let set = self.wordsets.get_mut(&node).expect("word multiset");
        let c = set.get_mut(&w).expect("marker word");
        *c -= 1;
        if *c == 0 {
            set.remove(&w);
        }
    }

    fn absorb(&mut self, log: &EventLog, upto: u64) {
        for ev in log.events_between(self.scanned, upto) {
            if let Some(&m) = self.masks.get(&ev.e) {
                let old = self.word(ev.x);
                if old | m == old {
                    continue;
                }
                self.words.insert(ev.x, old | m);
                for node in self.marker_of.get(&ev.x).cloned().unwrap_or_default() {
                    self.unweigh(node, old);
                    *self.wordsets.entry(node).or_default().entry(old | m).or_default() += 1;
                    self.dirty.insert(node);
                }
            }
        }
        self.scanned = upto;
    }

    /// Candidate groups for a pull at `alpha` below `delta`.
    fn candidates(&self, alpha: Node, delta: Node) -> Vec<&BTreeSet<u64>> {
        let mut out = Vec::new();
        let mut keys = vec![(delta, RT_POS), (alpha, FREE)];
        if !delta.is_root() {
            keys.push((delta, FREE));
        }
        for k in keys {
            if let Some(g) = self.groups.get(&k) {
                out.push(g);
            }
        }
        for (_, g) in self.groups.range((alpha.subtree_end(), 0)..(delta.subtree_end(), 0)) {
            out.push(g);
        }
        out
    }

    fn try_pull(&mut self, ctx: &mut GenContext<'_>, log: &EventLog, alpha: Node) -> bool {
        let delta = alpha.r_parent();
        let w = if alpha.is_r_node() { alpha.last_bit() == Some(1) } else { false };
        let wj = w.then(|| self.listing.get(super::node::isqrt(alpha.len()) as u64));
        let key = (self.versions.get(&delta).copied().unwrap_or(0), wj.map_or(0, |i| log.enumeration(i).len()));
        if self.memo.get(&alpha) == Some(&key) {
            return false;
        }
        let own_pair = self.slots.get(&alpha).copied();
        let l = alpha.len() as u64;
        let base_ok = |x: u64| -> bool {
            x > l && self.in_rt(delta, x) && own_pair.is_none_or(|(r, rt)| !self.has(r, x) && !self.has(rt, x))
        };
        let mut best: Vec<u64> = Vec::new();
        fn keep(best: &mut Vec<u64>, x: u64) {
            best.push(x);
            best.sort_unstable();
            best.dedup();
            best.truncate(2);
        }
        let groups = self.candidates(alpha, delta);
        let pool: usize = groups.iter().map(|g| g.len()).sum();
        match wj.map(|i| log.enumeration(i)).filter(|en| en.len() < pool) {
            // A sparse W_j is cheaper to walk than the balls.
            Some(en) => {
                let (lo, hi) = (alpha.subtree_end(), delta.subtree_end());
                let placed = |x: u64| {
                    self.pos.get(&x).is_some_and(|&(nd, kind)| {
                        (nd == delta && (kind == RT_POS || (kind == FREE && !delta.is_root())))
                            || (nd == alpha && kind == FREE)
                            || (nd >= lo && nd < hi)
                    })
                };
                for &(_, x) in en {
                    if placed(x) && base_ok(x) {
                        keep(&mut best, x);
                    }
                }
            }
            None => {
                for g in groups {
                    for &x in g {
                        if best.len() == 2 && x > best[1] {
                            break;
                        }
                        if base_ok(x) && wj.is_none_or(|i| log.contains(i, x)) {
                            keep(&mut best, x);
                        }
                    }
                }
            }
        }
        if best.len() < 2 {
            self.memo.insert(alpha, key);
            return false;
        }
        let (x0, x1) = (best[0], best[1]);
        let mut extra: BTreeSet<u64> = BTreeSet::new();
        for g in self.candidates(alpha, delta) {
            extra.extend(g.range(..x1).copied().filter(|&y| y != x0 && base_ok(y)));
        }
        let request = {
            let q = self.requests.get_mut(&alpha).expect("request");
            let r = q.pop_first().expect("request");
            if q.is_empty() {
                self.requests.remove(&alpha);
            }
            r
        };
        if let Some((r, rt)) = own_pair {
            self.place(x0, alpha, R_POS);
            self.place(x1, alpha, RT_POS);
            self.put(ctx, r, x0);
            self.put(ctx, rt, x1);
            self.add_marker(alpha, x0);
            for &y in &extra {
                self.place(y, alpha, R_POS);
                self.put(ctx, r, y);
                self.add_marker(alpha, y);
            }
        } else {
            for &y in [x0, x1].iter().chain(extra.iter()) {
                self.place(y, alpha, HELD);
            }
        }
        self.records.push(Record::Pull {
            s: self.n,
            node: alpha.to_string(),
            request,
            x0,
            x1,
            extra: extra.into_iter().collect(),
        });
        true
    }

    fn patch(&mut self, ctx: &mut GenContext<'_>, log: &EventLog, alpha: Node) {
        let delta = alpha.r_parent();
        let (r, rt) = self.slots[&alpha];
        let rt_delta = self.rt_of(delta);
        let seen = self.patched.get(&alpha).copied().unwrap_or(0);
        let entries = log.enumeration(self.a);
        for &(ta, x) in &entries[seen..] {
            let from = rt_delta.is_none_or(|i| log.entry_stage(i, x).is_some_and(|t| t < ta));
            if from && !self.has(r, x) && !self.has(rt, x) {
                self.put(ctx, r, x);
                self.records.push(Record::Patch { s: self.n, node: alpha.to_string(), x });
            }
        }
        self.patched.insert(alpha, entries.len());
    }

    /// Original dumping at `alpha`; returns the `e` used, if any.
    fn maximal(&mut self, ctx: &mut GenContext<'_>, alpha: Node) -> Option<u64> {
        if !self.dirty.remove(&alpha) {
            return None;
        }
        // Only the first 64 markers can play `e`; beyond them a word
        // multiset stands in for the rest of the list.
        let head: Vec<u64> = self.markers.get(&alpha).map(|m| m.iter().take(E_STATES as usize + 1).copied().collect()).unwrap_or_default();
        let w: Vec<u64> = head.iter().map(|&x| self.word(x)).collect();
        let m = self.markers.get(&alpha).map_or(0, |s| s.len());
        let mut in_head: BTreeMap<u64, u32> = BTreeMap::new();
        for &x in &w {
            *in_head.entry(x).or_default() += 1;
        }
        let tail_max = self
            .wordsets
            .get(&alpha)
            .and_then(|ws| ws.iter().rev().find(|(k, &c)| c > in_head.get(k).copied().unwrap_or(0)).map(|(&k, _)| k))
            .unwrap_or(0);
        let mut suffix = vec![tail_max; head.len() + 1];
        for i in (0..head.len()).rev() {
            suffix[i] = suffix[i + 1].max(w[i]);
        }
        let limit = (E_STATES as usize).min(m).min(self.n as usize);
        if limit < (E_STATES as usize).min(m) {
            self.dirty.insert(alpha);
        }
        for e in 0..limit {
            let mine = pre(e as u64, w[e]);
            if pre(e as u64, suffix[e + 1]) <= mine {
                continue;
            }
            let (i, wi) = match (e + 1..head.len()).find(|&i| pre(e as u64, w[i]) > mine) {
                Some(i) => (i, w[i]),
                None => {
                    let markers = &self.markers[&alpha];
                    markers
                        .iter()
                        .enumerate()
                        .skip(head.len())
                        .map(|(i, x)| (i, self.word(*x)))
                        .find(|&(_, wx)| pre(e as u64, wx) > mine)
                        .expect("tail max")
                }
            };
            if (i as u64) + 1 >= self.n {
                // Allowed once the stage count catches up.
                self.dirty.insert(alpha);
                continue;
            }
            let balls: Vec<u64> = self.markers[&alpha].iter().skip(e).take(i - e).copied().collect();
            self.records.push(Record::Marker {
                s: self.n,
                node: alpha.to_string(),
                e: e as u64,
                i: i as u64,
                state_e: mine,
                state_i: pre(e as u64, wi),
            });
            for &x in &balls {
                self.dump(ctx, x);
            }
            self.records.push(Record::DumpOrig { s: self.n, node: alpha.to_string(), e: e as u64, i: i as u64, balls });
            return Some(e as u64);
        }
        None
    }

    /// `t_{γ,n}`: `max(|γ|, greatest t < n with f_t <_L γ)`.
    fn t_gamma(&mut self, gamma: Node) -> u64 {
        let (from, mut best) = self.left_cache.get(&gamma).copied().unwrap_or((0, 0));
        let upto = self.f_hist.len().saturating_sub(1);
        for (t, &(_, f)) in self.f_hist.iter().enumerate().take(upto).skip(from) {
            if f.left_of(gamma) {
                best = t as u64;
            }
        }
        self.left_cache.insert(gamma, (upto.max(from), best));
        best.max(gamma.len() as u64)
    }

    fn extra(&mut self, ctx: &mut GenContext<'_>, gamma: Node, orig: &HashMap<Node, u64>) {
        if !gamma.is_positive() {
            return;
        }
        let Question::T { beta, .. } = question_at(gamma.prefix(gamma.len() - 1)) else {
            return;
        };
        let t = self.t_gamma(gamma);
        let alphas: Vec<Node> = gamma.prefixes().filter(|a| a.is_r_node() && *a != gamma && *a != beta).collect();
        for alpha in alphas {
            if orig.get(&alpha).is_some_and(|&e| e <= t) {
                continue;
            }
            let Some(x) = self.markers.get(&alpha).filter(|m| m.len() as u64 > t).and_then(|m| m.iter().nth(t as usize).copied()) else {
                continue;
            };
            self.dump(ctx, x);
            self.records.push(Record::DumpExtra { s: self.n, gamma: gamma.to_string(), node: alpha.to_string(), t, x });
        }
    }

    /// Runs construction stage `self.n` at global stage `ctx.stage()`.
    pub fn stage(&mut self, ctx: &mut GenContext<'_>) {
        let log = ctx.log();
        let g = ctx.stage();
        self.absorb(log, g);
        let f = self.walk(ctx, log);
        self.f_hist.push((g, f));
        let n = self.n;

        for p in f.prefixes().filter(|p| p.is_resting()) {
            self.requests.entry(p).or_default().insert(n);
        }
        let voided: Vec<Node> = self.requests.range((Excluded(f), Unbounded)).map(|(k, _)| *k).collect();
        for k in voided {
            self.requests.remove(&k);
        }

        if f.len() >= 1 && n >= 1 {
            self.place(n - 1, f.prefix(1), FREE);
        }

        let right: Vec<((Node, u8), Vec<u64>)> = self
            .groups
            .range((f.subtree_end(), 0)..)
            .filter(|(_, b)| !b.is_empty())
            .map(|(k, b)| (*k, b.iter().copied().collect()))
            .collect();
        for ((from, _), balls) in right {
            let to = f.prefix(f.common(from) + 1);
            for &x in &balls {
                self.place(x, to, FREE);
            }
            self.records.push(Record::Left { s: n, from: from.to_string(), to: to.to_string(), balls });
        }

        let asked: Vec<Node> = self.requests.keys().copied().collect();
        for alpha in asked {
            if self.try_pull(ctx, log, alpha) {
                break;
            }
        }

        let on_f: Vec<Node> = f.prefixes().filter(|p| p.is_r_node()).collect();
        for &alpha in &on_f {
            self.patch(ctx, log, alpha);
        }
        let mut orig = HashMap::new();
        for &alpha in &on_f {
            if let Some(e) = self.maximal(ctx, alpha) {
                orig.insert(alpha, e);
            }
        }
        self.extra(ctx, f, &orig);
        self.n += 1;
    }
}
