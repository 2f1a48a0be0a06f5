use thiserror::Error;

use crate::kernel::Index;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseProgramError {
    #[error("program has no instructions")]
    Empty,
    #[error("instruction {pc}: unknown instruction {text:?}")]
    UnknownInstruction { pc: usize, text: String },
    #[error("instruction {pc}: bad operand in {text:?}")]
    BadOperand { pc: usize, text: String },
    #[error("instruction {pc}: label {label} out of range for program of length {len}")]
    LabelOutOfRange { pc: usize, label: usize, len: usize },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("host slot {0} is already registered")]
    DuplicateSlot(u64),
    #[error("stage {requested} stepped out of order (next stage is {expected})")]
    OutOfOrder { requested: u64, expected: u64 },
    #[error("generator emitted {element} into {index} twice")]
    DuplicateEmission { index: Index, element: u64 },
    #[error("generator for slot {owner} emitted into {index}, which it does not own")]
    ForeignEmission { owner: u64, index: Index },
    #[error("stage {requested} has not been stepped yet (stepped through {stepped:?})")]
    NotStepped { requested: u64, stepped: Option<u64> },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConstructionError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("ball {ball} was already routed")]
    DoubleRoute { ball: u64 },
    #[error("computable pair {pos}/{neg} overlaps at {element}")]
    Disjointness { pos: Index, neg: Index, element: u64 },
    #[error("element {element} of {a} is not covered by {x0} or {x1} by stage {stage}")]
    Coverage { a: Index, x0: Index, x1: Index, element: u64, stage: u64 },
    #[error("{node} codes no question")]
    NotAQuestion { node: String },
    #[error("splitting procedure is undefined at index {0}")]
    PartialProcedure(Index),
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
