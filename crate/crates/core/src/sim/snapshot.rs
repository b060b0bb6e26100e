//! JSON dump of the cache, fill buffer and changed memory, used for golden
//! trace tests.
//!
//! Field order is fixed by the struct declarations below. Addresses are
//! `0x`-prefixed lowercase hex; byte payloads are bare lowercase hex.
//! `l1d` lists valid lines in (set, way) order, `lfb.entries` lists valid
//! entries in slot order, and `l2` lists only lines whose contents differ
//! from what was originally mapped, in address order.

use serde::{Deserialize, Serialize};

use super::MachineState;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub l1d: Vec<LineRecord>,
    pub lfb: FillBufferRecord,
    pub l2: Vec<MemoryRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineRecord {
    pub set: usize,
    pub way: usize,
    pub tag: String,
    pub dirty: bool,
    pub lru_rank: u8,
    pub data: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillBufferRecord {
    pub read_offset: usize,
    pub entries: Vec<EntryRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryRecord {
    pub slot: usize,
    pub tag: String,
    pub age: u64,
    pub origin: String,
    pub data: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub line: String,
    pub data: String,
}

impl Snapshot {
    pub fn capture(m: &MachineState) -> Self {
        let l1d = m
            .l1d()
            .valid_lines()
            .map(|(set, way, l)| LineRecord {
                set,
                way,
                tag: format!("{:#x}", l.tag),
                dirty: l.dirty,
                lru_rank: l.lru_rank,
                data: hex::encode(l.data),
            })
            .collect();
        let entries = m
            .lfb()
            .entries()
            .iter()
            .enumerate()
            .filter(|(_, e)| e.valid)
            .map(|(slot, e)| EntryRecord {
                slot,
                tag: format!("{:#x}", e.tag),
                age: e.age,
                origin: e.origin.label(),
                data: hex::encode(e.data),
            })
            .collect();
        let l2 = m
            .l2()
            .deltas()
            .into_iter()
            .map(|(line, data)| MemoryRecord {
                line: format!("{line:#x}"),
                data: hex::encode(data),
            })
            .collect();
        Snapshot {
            l1d,
            lfb: FillBufferRecord {
                read_offset: m.lfb().read_offset(),
                entries,
            },
            l2,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serializes")
    }
}
