//! Finite-stage simulations of splitting constructions on computably
//! enumerable sets.
//!
//! Everything runs on top of one [`kernel::Kernel`]: a dovetailed register
//! machine enumeration whose odd indices are backed by host generators, so
//! constructed sets have genuine indices of their own.

pub mod algebra;
pub mod error;
pub mod friedberg;
pub mod harness;
pub mod hk;
pub mod kernel;
pub mod trace;
pub mod tree;
pub mod witness;

pub use error::{ConstructionError, KernelError, ParseProgramError, TraceError};
pub use kernel::{EnumerationEvent, EventLog, Index, Kernel};
