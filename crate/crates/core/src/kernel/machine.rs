//! A four-instruction register machine.
//!
//! Programs are written one per line, instructions separated by `;`:
//!
//! ```text
//! INC 0; DECJZ 0 3; JMP 0; HALT
//! ```
//!
//! `DECJZ r L` jumps to `L` when register `r` is zero and otherwise
//! decrements it and falls through. The input is placed in register 0 and
//! all other registers start at zero.

use std::fmt;
use std::str::FromStr;

use crate::error::ParseProgramError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Instruction {
    Inc(u8),
    DecJz(u8, u16),
    Jmp(u16),
    Halt,
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Instruction::Inc(r) => write!(f, "INC {r}"),
            Instruction::DecJz(r, l) => write!(f, "DECJZ {r} {l}"),
            Instruction::Jmp(l) => write!(f, "JMP {l}"),
            Instruction::Halt => f.write_str("HALT"),
        }
    }
}

/// A validated program: non-empty, every jump target in range.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MachineProgram {
    instructions: Vec<Instruction>,
    registers: usize,
}

impl MachineProgram {
    pub fn new(instructions: Vec<Instruction>) -> Result<Self, ParseProgramError> {
        if instructions.is_empty() {
            return Err(ParseProgramError::Empty);
        }
        let len = instructions.len();
        let mut registers = 1;
        for (pc, ins) in instructions.iter().enumerate() {
            let target = match *ins {
                Instruction::DecJz(r, l) => {
                    registers = registers.max(r as usize + 1);
                    Some(l)
                }
                Instruction::Inc(r) => {
                    registers = registers.max(r as usize + 1);
                    None
                }
                Instruction::Jmp(l) => Some(l),
                Instruction::Halt => None,
            };
            if let Some(l) = target {
                if l as usize >= len {
                    return Err(ParseProgramError::LabelOutOfRange { pc, label: l as usize, len });
                }
            }
        }
        Ok(Self { instructions, registers })
    }

    /// The program `JMP 0`, which never halts.
    pub fn diverging() -> Self {
        Self { instructions: vec![Instruction::Jmp(0)], registers: 1 }
    }

    /// Decodes program text, falling back to [`MachineProgram::diverging`]
    /// on any parse or validation failure.
    pub fn decode_total(text: &str) -> Self {
        text.parse().unwrap_or_else(|_| Self::diverging())
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn start(&self, input: u64) -> MachineState {
        let mut regs = vec![0; self.registers].into_boxed_slice();
        regs[0] = input;
        MachineState { pc: 0, regs, steps: 0 }
    }

    /// Runs at most `fuel` steps.
    pub fn run(&self, state: &mut MachineState, fuel: u32) -> RunOutcome {
        let mut mutated = false;
        for _ in 0..fuel {
            match self.instructions[state.pc] {
                Instruction::Halt => return RunOutcome::Halted,
                Instruction::Inc(r) => {
                    state.regs[r as usize] = state.regs[r as usize].saturating_add(1);
                    state.pc += 1;
                    mutated = true;
                }
                Instruction::DecJz(r, l) => {
                    let reg = &mut state.regs[r as usize];
                    if *reg == 0 {
                        state.pc = l as usize;
                    } else {
                        *reg -= 1;
                        state.pc += 1;
                        mutated = true;
                    }
                }
                Instruction::Jmp(l) => state.pc = l as usize,
            }
            state.steps += 1;
            if state.pc >= self.instructions.len() {
                // Falling off the end is treated as halting.
                return RunOutcome::Halted;
            }
        }
        if matches!(self.instructions[state.pc], Instruction::Halt) {
            return RunOutcome::Halted;
        }
        // With registers frozen the successor of each configuration depends
        // only on the pc, so more than `len` register-free steps means a cycle.
        if !mutated && fuel as usize > self.instructions.len() {
            RunOutcome::Looping
        } else {
            RunOutcome::Running
        }
    }

    /// Convenience: does the program halt on `input` within `budget` steps?
    pub fn halts_within(&self, input: u64, budget: u64) -> bool {
        let mut state = self.start(input);
        let mut left = budget;
        while left > 0 {
            let fuel = left.min(1 << 16) as u32;
            match self.run(&mut state, fuel) {
                RunOutcome::Halted => return true,
                RunOutcome::Looping => return false,
                RunOutcome::Running => left -= fuel as u64,
            }
        }
        false
    }
}

impl fmt::Display for MachineProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, ins) in self.instructions.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{ins}")?;
        }
        Ok(())
    }
}

impl FromStr for MachineProgram {
    type Err = ParseProgramError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut instructions = Vec::new();
        for (pc, raw) in text.split(';').enumerate() {
            let raw = raw.trim();
            if raw.is_empty() {
                continue;
            }
            let mut words = raw.split_whitespace();
            let op = words.next().unwrap_or_default().to_ascii_uppercase();
            let args: Vec<&str> = words.collect();
            let num = |s: &str| -> Result<u64, ParseProgramError> {
                s.parse().map_err(|_| ParseProgramError::BadOperand { pc, text: raw.to_string() })
            };
            let reg = |s: &str| -> Result<u8, ParseProgramError> {
                u8::try_from(num(s)?).map_err(|_| ParseProgramError::BadOperand { pc, text: raw.to_string() })
            };
            let label = |s: &str| -> Result<u16, ParseProgramError> {
                u16::try_from(num(s)?).map_err(|_| ParseProgramError::BadOperand { pc, text: raw.to_string() })
            };
            let ins = match (op.as_str(), args.as_slice()) {
                ("INC", [r]) => Instruction::Inc(reg(r)?),
                ("DECJZ", [r, l]) => Instruction::DecJz(reg(r)?, label(l)?),
                ("JMP", [l]) => Instruction::Jmp(label(l)?),
                ("HALT", []) => Instruction::Halt,
                _ => return Err(ParseProgramError::UnknownInstruction { pc, text: raw.to_string() }),
            };
            instructions.push(ins);
        }
        Self::new(instructions)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineState {
    pc: usize,
    regs: Box<[u64]>,
    steps: u64,
}

impl MachineState {
    pub fn steps(&self) -> u64 {
        self.steps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunOutcome {
    Halted,
    Running,
    /// A register-free cycle was detected; the machine can never halt.
    Looping,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_print() {
        let p: MachineProgram = "INC 0; DECJZ 0 3; JMP 0; HALT".parse().unwrap();
        assert_eq!(p.to_string(), "INC 0; DECJZ 0 3; JMP 0; HALT");
        assert_eq!(p.len(), 4);
    }

    #[test]
    fn rejects_bad_labels_and_empty() {
        assert!(matches!("JMP 4".parse::<MachineProgram>(), Err(ParseProgramError::LabelOutOfRange { .. })));
        assert!(matches!("".parse::<MachineProgram>(), Err(ParseProgramError::Empty)));
        assert!(matches!("FOO 1".parse::<MachineProgram>(), Err(ParseProgramError::UnknownInstruction { .. })));
    }

    #[test]
    fn invalid_text_decodes_to_divergence() {
        let p = MachineProgram::decode_total("garbage");
        assert_eq!(p, MachineProgram::diverging());
        assert!(!p.halts_within(0, 1000));
    }

    #[test]
    fn halt_immediately() {
        let p: MachineProgram = "HALT".parse().unwrap();
        let mut st = p.start(7);
        assert_eq!(p.run(&mut st, 1), RunOutcome::Halted);
    }

    #[test]
    fn parity_program() {
        let p: MachineProgram = "DECJZ 0 3; DECJZ 0 4; JMP 0; HALT; JMP 4".parse().unwrap();
        for x in 0..20 {
            assert_eq!(p.halts_within(x, 10_000), x % 2 == 0, "x = {x}");
        }
    }

    #[test]
    fn pure_jump_loop_is_detected() {
        let p = MachineProgram::diverging();
        let mut st = p.start(0);
        assert_eq!(p.run(&mut st, 8), RunOutcome::Looping);
    }

    #[test]
    fn counting_loop_is_not_misreported() {
        let p: MachineProgram = "INC 1; JMP 0".parse().unwrap();
        let mut st = p.start(0);
        assert_eq!(p.run(&mut st, 64), RunOutcome::Running);
    }
}
