use super::corpus::Corpus;
use super::index::{cantor_unpair, Index};
use super::machine::{MachineProgram, MachineState, RunOutcome};

/// Steps granted to a `(program, input)` pair per visit.
pub const FUEL_PER_TICK: u32 = 64;

#[derive(Debug, Clone)]
struct LivePair {
    code: u64,
    input: u64,
    state: MachineState,
    ticks: u64,
}

/// Round-robin simulation of every `(machine code, input)` pair.
///
/// Pairs are introduced in Cantor order, one per phase; each phase then
/// visits every pair that is still running once. A tick is either the
/// introduction of a pair or one visit.
#[derive(Debug, Clone)]
pub struct Dovetailer {
    corpus: Corpus,
    live: Vec<LivePair>,
    cursor: usize,
    introduced: u64,
    ticks: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Halt {
    pub index: Index,
    pub input: u64,
}

impl Dovetailer {
    pub fn new(corpus: Corpus) -> Self {
        Self { corpus, live: Vec::new(), cursor: 0, introduced: 0, ticks: 0 }
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    /// Number of pairs introduced so far.
    pub fn introduced(&self) -> u64 {
        self.introduced
    }

    pub fn live_pairs(&self) -> usize {
        self.live.len()
    }

    /// Simulation visits granted so far to the pair `(code, input)`, if it
    /// is still running.
    pub fn visits(&self, code: u64, input: u64) -> Option<u64> {
        self.live.iter().find(|p| p.code == code && p.input == input).map(|p| p.ticks)
    }

    pub fn tick(&mut self) -> Option<Halt> {
        self.ticks += 1;
        if self.cursor >= self.live.len() {
            self.cursor = 0;
            let (code, input) = cantor_unpair(self.introduced);
            self.introduced += 1;
            let state = self.program(code).start(input);
            let mut pair = LivePair { code, input, state, ticks: 0 };
            if visit(&self.corpus, &mut pair) {
                return Some(Halt { index: Index(2 * code), input });
            }
            if !pair_is_dead(&pair) {
                self.live.push(pair);
            }
            return None;
        }
        let pair = &mut self.live[self.cursor];
        let halted = visit(&self.corpus, pair);
        if halted || pair_is_dead(pair) {
            let pair = self.live.remove(self.cursor);
            halted.then_some(Halt { index: Index(2 * pair.code), input: pair.input })
        } else {
            self.cursor += 1;
            None
        }
    }

    fn program(&self, code: u64) -> &MachineProgram {
        self.corpus.get((code % self.corpus.len() as u64) as usize)
    }
}

/// Runs one visit; returns true on halt. Looping pairs get their visit
/// counter pinned to `u64::MAX` so the caller can drop them.
fn visit(corpus: &Corpus, pair: &mut LivePair) -> bool {
    pair.ticks += 1;
    let program = corpus.get((pair.code % corpus.len() as u64) as usize);
    match program.run(&mut pair.state, FUEL_PER_TICK) {
        RunOutcome::Halted => true,
        RunOutcome::Running => false,
        RunOutcome::Looping => {
            pair.ticks = u64::MAX;
            false
        }
    }
}

fn pair_is_dead(pair: &LivePair) -> bool {
    pair.ticks == u64::MAX
}
