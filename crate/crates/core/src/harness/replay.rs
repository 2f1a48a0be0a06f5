//! Naive re-derivation of splitter decisions from the raw event log.
//!
//! Nothing here shares code with the constructions: every counter and
//! disagreement length is recomputed from scratch at the stage it is used.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::Divergence;
use crate::kernel::{cantor_pair, cantor_unpair, triple_code, EventLog, Index};
use crate::trace::{Record, Trace};

fn diverge(out: &mut Vec<Divergence>, line: usize, stage: u64, what: String) {
    out.push(Divergence { line, stage, what });
}

/// `|{y ∈ A_i : y entered W_e before A_i, A_i-entry < s}|`.
fn naive_counter(log: &EventLog, e: Index, half: Index, s: u64) -> u64 {
    log.enumeration(half)
        .iter()
        .take_while(|(t, _)| *t < s)
        .filter(|&&(t, y)| log.entry_stage(e, y).is_some_and(|te| te < t))
        .count() as u64
}

pub fn friedberg(trace: &Trace, a: Index, halves: [Index; 2]) -> Vec<Divergence> {
    let log = trace.log();
    let mut out = Vec::new();
    let a_order = log.enumeration(a);
    let mut next = 0usize;
    let mut routed: HashMap<u64, u8> = HashMap::new();
    for (line, rec) in trace.decisions() {
        let Record::Route { s, x, req, side } = rec else {
            continue;
        };
        let (line, s, x) = (*line, *s, *x);
        match a_order.get(next) {
            Some(&(t, y)) if y == x && t < s => {}
            other => {
                diverge(&mut out, line, s, format!("routed {x}, expected next ball {:?}", other.map(|p| p.1)));
                next += 1;
                continue;
            }
        }
        let entered = a_order[next].0;
        next += 1;
        let mut best: Option<(u128, Index, u8, u64)> = None;
        for &(e, te) in log.memberships(x) {
            if te >= entered {
                continue;
            }
            for i in 0..2u8 {
                let k = naive_counter(&log, e, halves[i as usize], s) + 1;
                let code = triple_code(e.0, i as u64, k);
                if best.is_none_or(|b| code < b.0) {
                    best = Some((code, e, i, k));
                }
            }
        }
        let want_req = best.map(|(_, e, i, k)| (e, i, k));
        let want_side = best.map_or(0, |b| b.2);
        if *req != want_req || *side != want_side {
            diverge(&mut out, line, s, format!("ball {x}: recorded {req:?} side {side}, expected {want_req:?} side {want_side}"));
        }
        routed.insert(x, want_side);
    }
    halves_match(trace, &log, halves, &routed, &mut out);
    out
}

/// Every element of a half must be a ball that belongs on that side.
fn halves_match(trace: &Trace, log: &EventLog, halves: [Index; 2], routed: &HashMap<u64, u8>, out: &mut Vec<Divergence>) {
    let lines = super::event_lines(trace);
    for (i, &h) in halves.iter().enumerate() {
        for &(t, x) in log.enumeration(h) {
            if routed.get(&x) != Some(&(i as u8)) {
                diverge(out, lines.get(&t).copied().unwrap_or(0), t, format!("{x} entered half {i} without being routed there"));
            }
        }
    }
}

pub struct HkSets {
    pub b: Index,
    pub a: Index,
    pub halves: [Index; 2],
    pub y: BTreeMap<u64, Index>,
    pub z: BTreeMap<u64, Index>,
}

impl HkSets {
    fn listed(map: &BTreeMap<u64, Index>, n: u64) -> Index {
        crate::kernel::canonical(map.get(&n).copied().unwrap_or(Index(n)))
    }

    /// `l(c, s)` by a direct scan of `0..=s`.
    fn l(&self, log: &EventLog, code: u64, s: u64) -> u64 {
        let (p, i) = cantor_unpair(code);
        let (e, j) = cantor_unpair(p);
        let (bi, ye, zj) = (self.halves[i as usize], Self::listed(&self.y, e), Self::listed(&self.z, j));
        for x in 0..=s {
            let bx = log.contains_at(bi, x, s);
            let ax = log.contains_at(self.a, x, s);
            let yx = log.contains_at(ye, x, s);
            if !bx && !ax && !yx {
                return x;
            }
            let left = bx && yx && !ax;
            let right = !log.contains_at(zj, x, s);
            if left == right {
                return x;
            }
        }
        s
    }
}

fn valid(code: u64) -> bool {
    cantor_unpair(code).1 <= 1
}

pub fn hk(trace: &Trace, sets: &HkSets) -> Vec<Divergence> {
    let log = trace.log();
    let mut out = Vec::new();
    let mut changes: BTreeMap<u64, Vec<(u64, u64)>> = BTreeMap::new();
    let b_order = log.enumeration(sets.b);
    let mut next = 0usize;
    let mut routed: HashMap<u64, u8> = HashMap::new();
    let mut seen: HashSet<u64> = HashSet::new();
    for (line, rec) in trace.decisions() {
        match rec {
            Record::Restraint { s, code, r } => {
                let hist = changes.entry(*code).or_default();
                let prev = hist.last().map_or(*code, |&(_, r)| r);
                if !valid(*code) || *code > *s {
                    diverge(&mut out, *line, *s, format!("restraint for inactive code {code}"));
                }
                if *r <= prev {
                    diverge(&mut out, *line, *s, format!("r for {code} went from {prev} to {r}"));
                }
                let l = sets.l(&log, *code, *s);
                if l != *r {
                    diverge(&mut out, *line, *s, format!("r for {code} set to {r}, but l = {l}"));
                }
                hist.push((*s, *r));
            }
            Record::Hk { s, x, triple, l, r, side } => {
                let (line, s, x) = (*line, *s, *x);
                match b_order.get(next) {
                    Some(&(t, y)) if y == x && t <= s => {}
                    other => diverge(&mut out, line, s, format!("routed {x}, expected next ball {:?}", other.map(|p| p.1))),
                }
                next += 1;
                if !seen.insert(x) {
                    diverge(&mut out, line, s, format!("{x} routed twice"));
                }
                let r_at = |c: u64| changes.get(&c).and_then(|h| h.iter().rev().find(|(t, _)| *t <= s)).map_or(c, |&(_, r)| r);
                let from_above = (x..).find(|&c| valid(c)).expect("valid code");
                let mut want = from_above;
                for (&c, _) in changes.range(..x) {
                    if c <= s && r_at(c) >= x {
                        want = c;
                        break;
                    }
                }
                let (p, i) = cantor_unpair(want);
                let (e, j) = cantor_unpair(p);
                let active = want <= s;
                let want_r = if active { r_at(want) } else { want };
                let want_l = if active { sets.l(&log, want, s) } else { want };
                let got = cantor_pair(cantor_pair(triple.0, triple.1), triple.2 as u64);
                if got != want || *r != want_r || *l != want_l || *side != i as u8 {
                    diverge(
                        &mut out,
                        line,
                        s,
                        format!("ball {x}: recorded <{},{},{}> l={l} r={r}, expected <{e},{j},{i}> l={want_l} r={want_r}", triple.0, triple.1, triple.2),
                    );
                }
                routed.insert(x, i as u8);
            }
            _ => {}
        }
    }
    halves_match(trace, &log, sets.halves, &routed, &mut out);
    out
}
