//! Expansionary-event counters standing in for the chip sets `C_γ`.

use std::collections::BTreeSet;

use crate::kernel::{EventLog, Index};

/// Reads the new tail of one set's enumeration.
#[derive(Debug, Clone, Copy)]
struct Cursor {
    index: Index,
    at: usize,
}

impl Cursor {
    fn new(index: Index) -> Self {
        Self { index, at: 0 }
    }

    fn fresh<'a>(&mut self, log: &'a EventLog) -> &'a [(u64, u64)] {
        let all = log.enumeration(self.index);
        let out = &all[self.at.min(all.len())..];
        self.at = all.len();
        out
    }
}

/// Counts `(W_j ∩ R̃_δ) \ A`; `rt = None` stands for `R̃_λ = ℕ`.
#[derive(Debug, Clone)]
pub struct RChip {
    w: Cursor,
    rt: Option<Cursor>,
    a: Index,
    pub count: u64,
}

impl RChip {
    pub fn new(w: Index, rt: Option<Index>, a: Index) -> Self {
        Self { w: Cursor::new(w), rt: rt.map(Cursor::new), a, count: 0 }
    }

    pub fn update(&mut self, log: &EventLog) -> u64 {
        let a = self.a;
        let before_a = |x: u64, t: u64| log.entry_stage(a, x).is_none_or(|ta| ta > t);
        let rt_index = self.rt.map(|c| c.index);
        for &(t, x) in self.w.fresh(log) {
            let joint = match rt_index {
                None => true,
                Some(r) => log.entry_stage(r, x).is_some_and(|tr| tr <= t),
            };
            if joint && before_a(x, t) {
                self.count += 1;
            }
        }
        if let Some(rt) = self.rt.as_mut() {
            if rt.index != self.w.index {
                for &(t, x) in rt.fresh(log) {
                    if log.entry_stage(self.w.index, x).is_some_and(|tw| tw < t) && before_a(x, t) {
                        self.count += 1;
                    }
                }
            }
        }
        self.count
    }
}

/// Watches `W_j ⊔ (W_{e_b} ∩ R_β) = R_β`.
///
/// The measured quantity is the number of elements of `R_β` below its
/// least unconfirmed element (confirmed meaning in `W_j ∪ W_{e_b}`); each
/// visit on which it exceeds every earlier value is an expansion. A
/// violation (`x ∈ W_j ∩ W_{e_b} ∩ R_β`, or `x ∈ W_j` certified outside
/// `R_β`) freezes the counter for good.
#[derive(Debug, Clone)]
pub struct TChip {
    w: Index,
    web: Index,
    r: Index,
    outside: Vec<Index>,
    cursors: Vec<Cursor>,
    members: BTreeSet<u64>,
    unconfirmed: BTreeSet<u64>,
    best: Option<usize>,
    pub frozen: bool,
    pub count: u64,
}

impl TChip {
    /// `outside` lists `R̃_β` and the `R_γ` for R-nodes `γ ⊊ β`.
    pub fn new(w: Index, web: Index, r: Index, outside: Vec<Index>) -> Self {
        let mut cursors = vec![Cursor::new(w), Cursor::new(web), Cursor::new(r)];
        cursors.extend(outside.iter().copied().map(Cursor::new));
        Self {
            w,
            web,
            r,
            outside,
            cursors,
            members: BTreeSet::new(),
            unconfirmed: BTreeSet::new(),
            best: None,
            frozen: false,
            count: 0,
        }
    }

    fn measure(&self) -> usize {
        match self.unconfirmed.first() {
            None => self.members.len(),
            Some(&u) => self.members.range(..u).count(),
        }
    }

    pub fn update(&mut self, log: &EventLog) -> u64 {
        if self.frozen {
            return self.count;
        }
        let mut touched = Vec::new();
        for c in self.cursors.iter_mut() {
            touched.extend(c.fresh(log).iter().map(|&(_, x)| x));
        }
        for x in touched {
            let in_w = log.contains(self.w, x);
            let in_eb = log.contains(self.web, x);
            let in_r = log.contains(self.r, x);
            if in_w && ((in_eb && in_r) || self.outside.iter().any(|&o| log.contains(o, x))) {
                self.frozen = true;
                return self.count;
            }
            if in_r {
                self.members.insert(x);
                if in_w || in_eb {
                    self.unconfirmed.remove(&x);
                } else {
                    self.unconfirmed.insert(x);
                }
            }
        }
        let m = self.measure();
        match self.best {
            None => self.best = Some(m),
            Some(b) if m > b => {
                self.best = Some(m);
                self.count += 1;
            }
            _ => {}
        }
        self.count
    }
}

#[derive(Debug, Clone)]
pub enum Chip {
    R(RChip),
    T(TChip),
}

impl Chip {
    pub fn update(&mut self, log: &EventLog) -> u64 {
        match self {
            Chip::R(c) => c.update(log),
            Chip::T(c) => c.update(log),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::EnumerationEvent;

    fn log(evs: &[(u64, u64, u64)]) -> EventLog {
        EventLog::from_events(evs.iter().map(|&(s, e, x)| EnumerationEvent { s, e: Index(e), x }), 0)
    }

    #[test]
    fn r_chip_counts_before_a() {
        // W = 4, R̃ = 6, A = 1.
        let l = log(&[(0, 4, 5), (1, 6, 5), (2, 6, 7), (3, 1, 7), (4, 4, 7), (5, 4, 9)]);
        let mut c = RChip::new(Index(4), Some(Index(6)), Index(1));
        assert_eq!(c.update(&l), 1);
        let mut n = RChip::new(Index(4), None, Index(1));
        assert_eq!(n.update(&l), 2);
        let mut empty = RChip::new(Index(0), None, Index(1));
        assert_eq!(empty.update(&l), 0);
    }

    #[test]
    fn t_chip_expands_then_freezes() {
        // W_j = 4, W_eb = 6, R_β = 8, R̃_β = 10.
        let mut evs = vec![(0, 8, 3), (1, 4, 3), (2, 8, 5), (3, 6, 5)];
        let mut c = TChip::new(Index(4), Index(6), Index(8), vec![Index(10)]);
        assert_eq!(c.update(&log(&evs[..1])), 0);
        assert_eq!(c.update(&log(&evs[..2])), 1);
        assert_eq!(c.update(&log(&evs[..3])), 1);
        assert_eq!(c.update(&log(&evs)), 2);
        evs.push((4, 10, 11));
        evs.push((5, 4, 11));
        assert_eq!(c.update(&log(&evs)), 2);
        assert!(c.frozen);
        evs.push((6, 8, 13));
        evs.push((7, 4, 13));
        assert_eq!(c.update(&log(&evs)), 2);
    }
}
