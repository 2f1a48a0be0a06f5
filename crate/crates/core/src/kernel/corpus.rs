use std::fmt::Write as _;
use std::sync::Arc;

use super::machine::{Instruction, MachineProgram};

/// The fixed list of machine programs behind the even indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    programs: Arc<Vec<MachineProgram>>,
}

impl Corpus {
    pub fn new(programs: Vec<MachineProgram>) -> Self {
        let programs = if programs.is_empty() { vec![MachineProgram::diverging()] } else { programs };
        Self { programs: Arc::new(programs) }
    }

    /// One program per line; lines that fail to parse become `JMP 0`.
    pub fn parse(text: &str) -> Self {
        Self::new(text.lines().map(MachineProgram::decode_total).collect())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in self.programs.iter() {
            let _ = writeln!(out, "{p}");
        }
        out
    }

    pub fn len(&self) -> usize {
        self.programs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.programs.is_empty()
    }

    pub fn get(&self, n: usize) -> &MachineProgram {
        &self.programs[n]
    }

    /// A deterministic corpus of `len` programs.
    ///
    /// Programs 0..4 are fixed: the empty set, all of N, the evens and the
    /// odds. The rest cycle through residue classes, thresholds, singletons
    /// and slow total programs.
    pub fn standard(len: usize) -> Self {
        let mut programs = Vec::with_capacity(len);
        for n in 0..len {
            programs.push(standard_program(n));
        }
        Self::new(programs)
    }
}

impl Default for Corpus {
    fn default() -> Self {
        Self::standard(512)
    }
}

pub const EMPTY_PROGRAM: usize = 0;
pub const ALL_PROGRAM: usize = 1;
pub const EVENS_PROGRAM: usize = 2;
pub const ODDS_PROGRAM: usize = 3;

fn standard_program(n: usize) -> MachineProgram {
    use Instruction::*;
    match n {
        0 => MachineProgram::diverging(),
        1 => MachineProgram::new(vec![Halt]).unwrap(),
        2 => residue(2, 0),
        3 => residue(2, 1),
        _ => {
            let k = n / 6;
            match n % 6 {
                0 => {
                    let b = 2 + (k % 6) as u16;
                    residue(b, (k as u16 * 7 + 1) % b)
                }
                1 => at_least((k % 24) as u16),
                2 => below(1 + (k % 40) as u16),
                3 => {
                    // Total, but takes about 3x steps on input x.
                    MachineProgram::new(vec![DecJz(0, 3), Inc(1), Jmp(0), Halt]).unwrap()
                }
                4 => exactly((k % 50) as u16),
                _ => {
                    if k.is_multiple_of(8) {
                        MachineProgram::new(vec![Inc(1), Jmp(0)]).unwrap()
                    } else {
                        residue(3 + (k % 4) as u16, 0)
                    }
                }
            }
        }
    }
}

/// Halts iff x = r (mod b).
fn residue(b: u16, r: u16) -> MachineProgram {
    use Instruction::*;
    let halt = b + 1;
    let lp = b + 2;
    let mut v: Vec<Instruction> = (0..b).map(|k| DecJz(0, if k == r { halt } else { lp })).collect();
    v.push(Jmp(0));
    v.push(Halt);
    v.push(Jmp(lp));
    MachineProgram::new(v).unwrap()
}

/// Halts iff x >= c.
fn at_least(c: u16) -> MachineProgram {
    use Instruction::*;
    let mut v: Vec<Instruction> = (0..c).map(|_| DecJz(0, c + 1)).collect();
    v.push(Halt);
    v.push(Jmp(c + 1));
    MachineProgram::new(v).unwrap()
}

/// Halts iff x < c.
fn below(c: u16) -> MachineProgram {
    use Instruction::*;
    let mut v: Vec<Instruction> = (0..c).map(|_| DecJz(0, c + 1)).collect();
    v.push(Jmp(c));
    v.push(Halt);
    MachineProgram::new(v).unwrap()
}

/// Halts iff x == c.
fn exactly(c: u16) -> MachineProgram {
    use Instruction::*;
    // c decrements must all succeed, then the register must be zero.
    let lp = c + 2;
    let halt = c + 3;
    let mut v: Vec<Instruction> = (0..c).map(|_| DecJz(0, lp)).collect();
    v.push(DecJz(0, halt));
    v.push(Jmp(lp));
    v.push(Jmp(lp));
    v.push(Halt);
    MachineProgram::new(v).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn halts(p: &MachineProgram, x: u64) -> bool {
        p.halts_within(x, 100_000)
    }

    #[test]
    fn fixed_programs() {
        let c = Corpus::standard(16);
        for x in 0..30 {
            assert!(!halts(c.get(EMPTY_PROGRAM), x));
            assert!(halts(c.get(ALL_PROGRAM), x));
            assert_eq!(halts(c.get(EVENS_PROGRAM), x), x % 2 == 0);
            assert_eq!(halts(c.get(ODDS_PROGRAM), x), x % 2 == 1);
        }
    }

    #[test]
    fn families() {
        for x in 0..40u64 {
            assert_eq!(halts(&residue(5, 3), x), x % 5 == 3);
            assert_eq!(halts(&at_least(7), x), x >= 7);
            assert_eq!(halts(&below(7), x), x < 7);
            assert_eq!(halts(&exactly(9), x), x == 9);
            assert_eq!(halts(&exactly(0), x), x == 0);
        }
    }

    #[test]
    fn text_roundtrip() {
        let c = Corpus::standard(512);
        assert_eq!(c.len(), 512);
        assert_eq!(Corpus::parse(&c.to_text()), c);
    }
}
