//! Find memory slots whose value is fixed within a boot, by comparing dumps
//! taken across restarts of the victim.

use serde::{Deserialize, Serialize};

use crate::addr::{LINE_SIZE, PAGE_SIZE};
use crate::attack::PageDump;

/// What the value of a slot must do across runs.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlotCriterion {
    /// Same value in every run: survives the restart.
    Stable,
    /// Not the same in every run: re-randomized by the restart.
    Varying,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaticSearch {
    pub criterion: SlotCriterion,
    /// Runs in which the slot must read consistently.
    pub min_runs: usize,
    /// Minimum count of the modal candidate of every byte.
    pub min_count: u64,
    /// Minimum share of the modal candidate among a byte's candidates.
    pub min_share: f64,
}

impl StaticSearch {
    pub fn new(criterion: SlotCriterion, min_runs: usize) -> Self {
        Self {
            criterion,
            min_runs,
            min_count: 1,
            min_share: 0.5,
        }
    }
}

/// A qualifying slot and the value it held in each consistent run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StaticSlot {
    pub line: usize,
    pub offset: usize,
    pub values: Vec<u64>,
}

/// The 8-byte little-endian value at `index` if every byte has a clear
/// winner in this dump.
pub fn consistent_value(dump: &PageDump, index: usize, min_count: u64, min_share: f64) -> Option<u64> {
    let mut bytes = [0u8; 8];
    for (j, b) in bytes.iter_mut().enumerate() {
        let cands = dump.candidates(index + j);
        let total: u64 = cands.values().sum();
        let (v, c) = cands.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))?;
        if *c < min_count || (*c as f64) < min_share * total as f64 {
            return None;
        }
        *b = *v;
    }
    Some(u64::from_le_bytes(bytes))
}

/// All 8-byte aligned slots meeting `search`, with their per-run values.
pub fn find_static_slots(dumps: &[PageDump], search: &StaticSearch) -> Vec<StaticSlot> {
    let mut out = Vec::new();
    for index in (0..PAGE_SIZE).step_by(8) {
        let values: Vec<u64> = dumps
            .iter()
            .filter_map(|d| consistent_value(d, index, search.min_count, search.min_share))
            .collect();
        if values.len() < search.min_runs.max(1) {
            continue;
        }
        let all_equal = values.iter().all(|v| *v == values[0]);
        let keep = match search.criterion {
            SlotCriterion::Stable => all_equal,
            SlotCriterion::Varying => !all_equal,
        };
        if keep {
            out.push(StaticSlot {
                line: index / LINE_SIZE,
                offset: index % LINE_SIZE,
                values,
            });
        }
    }
    out
}

/// (line, offset) of every slot meeting the default consistency rules.
pub fn find_static_locations(dumps: &[PageDump], min_runs: usize, criterion: SlotCriterion) -> Vec<(usize, usize)> {
    find_static_slots(dumps, &StaticSearch::new(criterion, min_runs))
        .into_iter()
        .map(|s| (s.line, s.offset))
        .collect()
}

/// Who a pointer-bearing slot belongs to, judged across a guest reboot:
/// guest kernel pointers move, hypervisor ones do not.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlotOwner {
    Guest,
    Hypervisor,
}

pub fn classify_across_reboot(values: &[u64]) -> SlotOwner {
    if values.iter().all(|v| *v == values[0]) {
        SlotOwner::Hypervisor
    } else {
        SlotOwner::Guest
    }
}
