//! Deterministic model of a core's L1-D cache and line fill buffer, the
//! transactional-abort sampling primitive that reads stale fill-buffer
//! data, attacker-side flows built on it, scripted victims, and the offline
//! reconstruction algorithms that turn noisy samples back into secrets.

pub mod addr;
pub mod attack;
pub mod crypto;
pub mod recon;
pub mod sim;
pub mod tsx;
pub mod victims;

pub use addr::Addr;
pub use sim::{
    Domain, DomainKind, MachineState, Mitigations, NoiseConfig, Op, SimError, Step, ThreadId,
};
