use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::Index;

/// "Element `x` entered `W_e` at stage `s`."
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnumerationEvent {
    pub s: u64,
    pub e: Index,
    pub x: u64,
}

#[derive(Debug, Default, Clone)]
struct SetLog {
    order: Vec<(u64, u64)>,
    entry: HashMap<u64, u64>,
}

/// Append-only log of enumeration events, at most one per stage.
#[derive(Debug, Default, Clone)]
pub struct EventLog {
    events: Vec<EnumerationEvent>,
    sets: HashMap<Index, SetLog>,
    by_element: HashMap<u64, Vec<(Index, u64)>>,
    stepped: u64,
}

static EMPTY_ORDER: Vec<(u64, u64)> = Vec::new();
static EMPTY_MEMBERSHIP: Vec<(Index, u64)> = Vec::new();

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a log from events; `stepped` is the number of stages run.
    pub fn from_events(events: impl IntoIterator<Item = EnumerationEvent>, stepped: u64) -> Self {
        let mut log = Self::new();
        for ev in events {
            log.record(ev);
        }
        log.stepped = log.stepped.max(stepped);
        log
    }

    /// Number of stages stepped: stages `0..stepped()` are final.
    pub fn stepped(&self) -> u64 {
        self.stepped
    }

    pub(crate) fn advance(&mut self, event: Option<EnumerationEvent>) {
        if let Some(ev) = event {
            debug_assert_eq!(ev.s, self.stepped);
            self.record(ev);
        }
        self.stepped += 1;
    }

    fn record(&mut self, ev: EnumerationEvent) {
        if let Some(last) = self.events.last() {
            assert!(ev.s > last.s, "two events at or before stage {}", ev.s);
        }
        let set = self.sets.entry(ev.e).or_default();
        assert!(set.entry.insert(ev.x, ev.s).is_none(), "{} entered {} twice", ev.x, ev.e);
        set.order.push((ev.s, ev.x));
        self.by_element.entry(ev.x).or_default().push((ev.e, ev.s));
        self.events.push(ev);
        self.stepped = self.stepped.max(ev.s + 1);
    }

    pub fn events(&self) -> &[EnumerationEvent] {
        &self.events
    }

    /// Events with stage in `from..to`.
    pub fn events_between(&self, from: u64, to: u64) -> &[EnumerationEvent] {
        let lo = self.events.partition_point(|e| e.s < from);
        let hi = self.events.partition_point(|e| e.s < to);
        &self.events[lo..hi.max(lo)]
    }

    pub fn event_at(&self, s: u64) -> Option<EnumerationEvent> {
        let i = self.events.partition_point(|e| e.s < s);
        self.events.get(i).filter(|e| e.s == s).copied()
    }

    /// Stage at which `x` entered `W_e`, if it has.
    pub fn entry_stage(&self, e: Index, x: u64) -> Option<u64> {
        self.sets.get(&super::canonical(e)).and_then(|set| set.entry.get(&x).copied())
    }

    /// `x ∈ W_{e,s}`.
    pub fn contains_at(&self, e: Index, x: u64, s: u64) -> bool {
        self.entry_stage(e, x).is_some_and(|t| t <= s)
    }

    pub fn contains(&self, e: Index, x: u64) -> bool {
        self.entry_stage(e, x).is_some()
    }

    /// `(stage, element)` pairs of `W_e` in enumeration order.
    pub fn enumeration(&self, e: Index) -> &[(u64, u64)] {
        self.sets.get(&super::canonical(e)).map_or(&EMPTY_ORDER, |set| &set.order)
    }

    /// `(index, stage)` pairs for every set `x` has entered, in stage order.
    pub fn memberships(&self, x: u64) -> &[(Index, u64)] {
        self.by_element.get(&x).map_or(&EMPTY_MEMBERSHIP, |v| v.as_slice())
    }

    /// `W_{e,s}`.
    pub fn w_at(&self, e: Index, s: u64) -> BTreeSet<u64> {
        self.enumeration(e).iter().take_while(|(t, _)| *t <= s).map(|&(_, x)| x).collect()
    }

    /// `|W_{e,s}|`.
    pub fn size_at(&self, e: Index, s: u64) -> usize {
        self.enumeration(e).partition_point(|(t, _)| *t <= s)
    }

    /// Indices that have at least one event, in code order.
    pub fn indices(&self) -> BTreeSet<Index> {
        self.sets.keys().copied().collect()
    }
}
