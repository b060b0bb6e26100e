//! Attacker side: eviction sets, the write and read flows, offset sweeps,
//! two-byte stitching and whole-page dumps.

mod dump;
mod evset;
mod flow;
mod histogram;
mod stitch;

pub use dump::{dump_page, PageDump, DUMP_OFFSETS};
pub use evset::{build_eviction_set, EvictionSet, EVSET_REGION, MAX_EVSET};
pub use flow::{
    attack_read, attack_write, leakage_source, Access, AttackOptions, Session, ThreadMode, VerwPlacement,
    ATTACKER_DOMAIN, ATTACKER_THREAD, LEAK_PAGE,
};
pub use histogram::{LeakHistogram, LeakSample};
pub use stitch::{stitch, Stitched};

use crate::sim::SimError;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AttackError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("eviction set size {0} outside 1..=16")]
    EvictionSetSize(usize),
    #[error("set index {0} outside 0..64")]
    BadSet(usize),
    #[error("read attacks need the victim on the sibling thread")]
    UnsupportedMode,
}
