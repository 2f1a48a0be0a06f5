//! The canonical enumeration `W_{e,s}`.
//!
//! Machine programs are dovetailed; constructed sets are supplied by host
//! generators registered under odd indices. Halts and host emissions share
//! one FIFO that releases a single event per stage, so every stage carries
//! at most one `(e, x)` pair and a registered generator's index enumerates
//! exactly what the generator emits, in emission order.

mod corpus;
mod dovetail;
mod index;
mod log;
mod machine;

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::io::{self, Write};

pub use corpus::{Corpus, ALL_PROGRAM, EMPTY_PROGRAM, EVENS_PROGRAM, ODDS_PROGRAM};
pub use dovetail::{Dovetailer, Halt, FUEL_PER_TICK};
pub use index::{cantor_pair, cantor_unpair, triple_code, Decoded, Index};
pub use log::{EnumerationEvent, EventLog};
pub use machine::{Instruction, MachineProgram, MachineState, RunOutcome};

use crate::error::KernelError;

/// A deterministic source of elements for constructed sets.
///
/// `pull` is called once per global stage, after the machine tick and
/// before the stage's event is released, so the log it sees ends at the
/// previous stage.
pub trait HostGenerator: Send {
    fn pull(&mut self, ctx: &mut GenContext<'_>);
}

impl<F> HostGenerator for F
where
    F: FnMut(&mut GenContext<'_>) + Send,
{
    fn pull(&mut self, ctx: &mut GenContext<'_>) {
        self(ctx)
    }
}

/// What a generator may see and do during `pull`.
pub struct GenContext<'a> {
    stage: u64,
    log: &'a EventLog,
    pending: usize,
    owner: usize,
    slots: &'a mut SlotTable,
    out: Vec<(Index, u64)>,
}

impl<'a> GenContext<'a> {
    /// The stage being stepped.
    pub fn stage(&self) -> u64 {
        self.stage
    }

    pub fn log(&self) -> &'a EventLog {
        self.log
    }

    /// Emissions of this generator still waiting in the FIFO.
    pub fn pending(&self) -> usize {
        self.pending + self.out.len()
    }

    pub fn emit(&mut self, set: Index, x: u64) {
        self.out.push((set, x));
    }

    /// Claims a fresh slot owned by this generator.
    pub fn new_set(&mut self) -> Index {
        let slot = self.slots.fresh();
        self.slots.owner.insert(slot, self.owner);
        Index::host(slot, 0)
    }
}

#[derive(Debug, Default)]
struct SlotTable {
    owner: BTreeMap<u64, usize>,
    next: u64,
}

impl SlotTable {
    fn fresh(&mut self) -> u64 {
        while self.owner.contains_key(&self.next) {
            self.next += 1;
        }
        let slot = self.next;
        self.next += 1;
        slot
    }
}

#[derive(Debug, Clone, Copy)]
struct Queued {
    index: Index,
    x: u64,
    owner: Option<usize>,
}

pub struct Kernel {
    dovetail: Dovetailer,
    generators: Vec<Box<dyn HostGenerator>>,
    pending: Vec<usize>,
    slots: SlotTable,
    queue: VecDeque<Queued>,
    emitted: HashSet<(Index, u64)>,
    log: EventLog,
}

impl Kernel {
    pub fn new(corpus: Corpus) -> Self {
        Self {
            dovetail: Dovetailer::new(corpus),
            generators: Vec::new(),
            pending: Vec::new(),
            slots: SlotTable::default(),
            queue: VecDeque::new(),
            emitted: HashSet::new(),
            log: EventLog::new(),
        }
    }

    pub fn corpus(&self) -> &Corpus {
        self.dovetail.corpus()
    }

    pub fn dovetailer(&self) -> &Dovetailer {
        &self.dovetail
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    /// Number of stages stepped so far.
    pub fn stepped(&self) -> u64 {
        self.log.stepped()
    }

    /// Index of corpus program `n`, unpadded.
    pub fn program_index(&self, n: usize) -> Index {
        Index::machine(n, 0, self.corpus().len())
    }

    /// The index of the empty set (corpus program 0 in the standard corpus).
    pub fn empty_index(&self) -> Index {
        self.program_index(EMPTY_PROGRAM)
    }

    pub fn next_free_slot(&self) -> u64 {
        let mut slot = self.slots.next;
        while self.slots.owner.contains_key(&slot) {
            slot += 1;
        }
        slot
    }

    /// Registers `gen` under `slot` and returns the slot's index.
    pub fn register_generator(&mut self, slot: u64, gen: Box<dyn HostGenerator>) -> Result<Index, KernelError> {
        if self.slots.owner.contains_key(&slot) {
            return Err(KernelError::DuplicateSlot(slot));
        }
        let id = self.generators.len();
        self.generators.push(gen);
        self.pending.push(0);
        self.slots.owner.insert(slot, id);
        Ok(Index::host(slot, 0))
    }

    /// Registers `gen` under the next free slot.
    pub fn register(&mut self, gen: Box<dyn HostGenerator>) -> Index {
        let slot = self.next_free_slot();
        self.register_generator(slot, gen).expect("fresh slot")
    }

    /// Registers `gen` together with `extra` further slots it owns; returns
    /// the primary index followed by the extra ones.
    pub fn register_with_sets(&mut self, gen: Box<dyn HostGenerator>, extra: usize) -> Vec<Index> {
        let primary = self.register(gen);
        let id = self.generators.len() - 1;
        let mut out = vec![primary];
        for _ in 0..extra {
            let slot = self.slots.fresh();
            self.slots.owner.insert(slot, id);
            out.push(Index::host(slot, 0));
        }
        out
    }

    /// A different index with the same limit set.
    ///
    /// Machine indices are padded by one corpus period and are simulated
    /// separately, so their events land at other stages. Host indices
    /// with a nonzero pad alias the unpadded slot in the log.
    pub fn pad(&self, e: Index) -> Index {
        pad_index(e, self.corpus().len())
    }

    /// Steps stage `s`, which must be the next unstepped stage.
    pub fn step(&mut self, s: u64) -> Result<Option<EnumerationEvent>, KernelError> {
        let expected = self.log.stepped();
        if s != expected {
            return Err(KernelError::OutOfOrder { requested: s, expected });
        }
        if let Some(halt) = self.dovetail.tick() {
            self.queue.push_back(Queued { index: halt.index, x: halt.input, owner: None });
        }
        for id in 0..self.generators.len() {
            let mut ctx = GenContext {
                stage: s,
                log: &self.log,
                pending: self.pending[id],
                owner: id,
                slots: &mut self.slots,
                out: Vec::new(),
            };
            self.generators[id].pull(&mut ctx);
            let out = ctx.out;
            for (index, x) in out {
                let owner_slot = match index.decode(1) {
                    Decoded::Host { slot, pad: 0 } => self.slots.owner.get(&slot).copied(),
                    _ => None,
                };
                if owner_slot != Some(id) {
                    let owner = self.slots.owner.iter().find(|(_, &g)| g == id).map_or(u64::MAX, |(&s, _)| s);
                    return Err(KernelError::ForeignEmission { owner, index });
                }
                if !self.emitted.insert((index, x)) {
                    return Err(KernelError::DuplicateEmission { index, element: x });
                }
                self.pending[id] += 1;
                self.queue.push_back(Queued { index, x, owner: Some(id) });
            }
        }
        let event = self.queue.pop_front().map(|q| {
            if let Some(id) = q.owner {
                self.pending[id] -= 1;
            }
            EnumerationEvent { s, e: q.index, x: q.x }
        });
        self.log.advance(event);
        Ok(event)
    }

    /// Steps every stage up to and including `last`.
    pub fn run_through(&mut self, last: u64) -> Result<(), KernelError> {
        while self.log.stepped() <= last {
            self.step(self.log.stepped())?;
        }
        Ok(())
    }

    /// `W_{e,s}`; stage `s` must already be stepped.
    pub fn w_at(&self, e: Index, s: u64) -> Result<std::collections::BTreeSet<u64>, KernelError> {
        self.require(s)?;
        Ok(self.log.w_at(canonical(e), s))
    }

    fn require(&self, s: u64) -> Result<(), KernelError> {
        if s >= self.log.stepped() {
            return Err(KernelError::NotStepped { requested: s, stepped: self.log.stepped().checked_sub(1) });
        }
        Ok(())
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }
}

/// Host indices with a pad alias their unpadded slot.
pub fn canonical(e: Index) -> Index {
    if e.is_host() {
        let (slot, _) = cantor_unpair(e.0 / 2);
        Index::host(slot, 0)
    } else {
        e
    }
}

pub fn pad_index(e: Index, corpus_len: usize) -> Index {
    match e.decode(corpus_len) {
        Decoded::Machine { program, pad } => Index::machine(program, pad + 1, corpus_len),
        Decoded::Host { slot, pad } => Index::host(slot, pad + 1),
    }
}

/// Writes `{"s":..,"e":..,"x":..}` lines.
pub fn write_events_jsonl<W: Write>(events: &[EnumerationEvent], mut out: W) -> io::Result<()> {
    for ev in events {
        serde_json::to_writer(&mut out, ev)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
