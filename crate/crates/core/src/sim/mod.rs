//! Functional model of one physical core's data-side memory subsystem.

mod cache;
mod domain;
mod error;
mod lfb;
mod machine;
mod memory;
mod noise;
pub mod snapshot;

pub use cache::{CacheLine, L1DCache};
pub use domain::{Domain, DomainKind};
pub use error::SimError;
pub use lfb::{EntryOrigin, FillBuffer, FillBufferEntry, LFB_ENTRIES};
pub use machine::{
    ArchView, MachineState, Mitigations, Op, RunSummary, Step, ThreadContext, ThreadId,
    NUM_REGS, NUM_THREADS,
};
pub use memory::Memory;
pub use noise::NoiseConfig;
