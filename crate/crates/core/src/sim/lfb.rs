use serde::{Deserialize, Serialize};

use crate::addr::LINE_SIZE;

pub const LFB_ENTRIES: usize = 12;

/// Why an entry was allocated.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EntryOrigin {
    /// Demand fill of a missing line, requested by the given logical thread.
    Fill { thread: usize },
    /// Dirty line leaving the L1-D on its way to L2.
    Writeback,
}

impl EntryOrigin {
    pub fn label(self) -> String {
        match self {
            EntryOrigin::Fill { thread } => format!("fill:{thread}"),
            EntryOrigin::Writeback => "writeback".to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FillBufferEntry {
    pub tag: u64,
    pub data: [u8; LINE_SIZE],
    pub valid: bool,
    /// Allocation counter; larger is younger.
    pub age: u64,
    pub origin: EntryOrigin,
}

impl Default for FillBufferEntry {
    fn default() -> Self {
        Self {
            tag: 0,
            data: [0; LINE_SIZE],
            valid: false,
            age: 0,
            origin: EntryOrigin::Writeback,
        }
    }
}

/// Twelve-entry line fill buffer with FIFO replacement and a core-global
/// read-offset register.
///
/// Completed transfers leave their entry valid: the data stays in the
/// buffer until the slot is reallocated or sanitized by `verw`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FillBuffer {
    entries: [FillBufferEntry; LFB_ENTRIES],
    read_offset: u8,
    next_age: u64,
}

impl Default for FillBuffer {
    fn default() -> Self {
        Self {
            entries: std::array::from_fn(|_| FillBufferEntry::default()),
            read_offset: 0,
            next_age: 1,
        }
    }
}

impl FillBuffer {
    pub fn entries(&self) -> &[FillBufferEntry; LFB_ENTRIES] {
        &self.entries
    }

    pub fn read_offset(&self) -> usize {
        self.read_offset as usize
    }

    pub(crate) fn set_read_offset(&mut self, offset: usize) {
        self.read_offset = (offset % LINE_SIZE) as u8;
    }

    pub fn valid_count(&self) -> usize {
        self.entries.iter().filter(|e| e.valid).count()
    }

    /// Allocate a slot for `data`, reusing the oldest valid entry when all
    /// twelve are busy. Returns the slot index.
    pub(crate) fn allocate(&mut self, tag: u64, data: [u8; LINE_SIZE], origin: EntryOrigin) -> usize {
        let slot = match self.entries.iter().position(|e| !e.valid) {
            Some(s) => s,
            None => self
                .entries
                .iter()
                .enumerate()
                .min_by_key(|(_, e)| e.age)
                .map(|(s, _)| s)
                .expect("fill buffer has slots"),
        };
        self.entries[slot] = FillBufferEntry {
            tag,
            data,
            valid: true,
            age: self.next_age,
            origin,
        };
        self.next_age += 1;
        slot
    }

    /// Sanitize every entry: invalid and zero filled.
    pub(crate) fn overwrite(&mut self) {
        for e in self.entries.iter_mut() {
            *e = FillBufferEntry::default();
        }
    }

    /// Youngest valid entry satisfying `pred`.
    pub fn youngest_where(&self, mut pred: impl FnMut(&FillBufferEntry) -> bool) -> Option<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.valid && pred(e))
            .max_by_key(|(_, e)| e.age)
            .map(|(i, _)| i)
    }

    pub fn holds_line(&self, data: &[u8; LINE_SIZE]) -> bool {
        self.entries.iter().any(|e| e.valid && &e.data == data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirteenth_allocation_displaces_oldest() {
        let mut lfb = FillBuffer::default();
        for i in 0..13u64 {
            lfb.allocate(i * 64, [i as u8; 64], EntryOrigin::Fill { thread: 0 });
        }
        assert_eq!(lfb.valid_count(), 12);
        assert!(!lfb.entries().iter().any(|e| e.tag == 0));
        assert!(lfb.entries().iter().any(|e| e.tag == 12 * 64));
    }

    #[test]
    fn overwrite_zeroes_everything() {
        let mut lfb = FillBuffer::default();
        lfb.allocate(0x40, [0xaa; 64], EntryOrigin::Writeback);
        lfb.overwrite();
        assert_eq!(lfb.valid_count(), 0);
        assert!(lfb.entries().iter().all(|e| e.data == [0; 64]));
    }

    #[test]
    fn youngest_respects_predicate() {
        let mut lfb = FillBuffer::default();
        lfb.allocate(0x40, [1; 64], EntryOrigin::Writeback);
        lfb.allocate(0x80, [2; 64], EntryOrigin::Fill { thread: 0 });
        let any = lfb.youngest_where(|_| true).unwrap();
        assert_eq!(lfb.entries()[any].tag, 0x80);
        let wb = lfb.youngest_where(|e| e.origin == EntryOrigin::Writeback).unwrap();
        assert_eq!(lfb.entries()[wb].tag, 0x40);
    }
}
