use crate::addr::{Addr, NUM_SETS, PAGE_SIZE};
use crate::sim::{MachineState, SimError, ThreadId};

use super::AttackError;

/// Attacker pages backing eviction sets; one page per possible member.
pub const EVSET_REGION: u64 = 0x1000_0000;
pub const MAX_EVSET: usize = 16;

/// Addresses congruent to one L1-D set, from distinct pages.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvictionSet {
    pub target_set: usize,
    pub addrs: Vec<Addr>,
}

pub fn build_eviction_set(target_set: usize, size: usize) -> Result<EvictionSet, AttackError> {
    if target_set >= NUM_SETS {
        return Err(AttackError::BadSet(target_set));
    }
    if !(1..=MAX_EVSET).contains(&size) {
        return Err(AttackError::EvictionSetSize(size));
    }
    let addrs = (0..size)
        .map(|i| Addr::from_parts(EVSET_REGION + (i * PAGE_SIZE) as u64, target_set, 0))
        .collect();
    Ok(EvictionSet { target_set, addrs })
}

impl EvictionSet {
    /// Pages an attacker must own for any eviction set to work.
    pub fn region_pages() -> impl Iterator<Item = u64> {
        (0..MAX_EVSET).map(|i| EVSET_REGION + (i * PAGE_SIZE) as u64)
    }

    /// Load every member once, in order.
    pub fn access(&self, m: &mut MachineState, thread: ThreadId) -> Result<(), SimError> {
        for a in &self.addrs {
            m.load(thread, *a)?;
        }
        Ok(())
    }
}
