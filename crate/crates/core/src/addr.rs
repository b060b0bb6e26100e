use std::fmt;

use serde::{Deserialize, Serialize};

pub const LINE_SIZE: usize = 64;
pub const NUM_SETS: usize = 64;
pub const NUM_WAYS: usize = 8;
pub const PAGE_SIZE: usize = 4096;

/// A virtual address. The L1-D is virtually indexed: bits 6-11 select the
/// set and bits 0-5 the byte within the line.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Addr(pub u64);

impl Addr {
    const OFFSET_MASK: u64 = 0x3f;
    const SET_MASK: u64 = 0xfc0;

    pub const fn new(vaddr: u64) -> Self {
        Self(vaddr)
    }

    /// Build an address from a page base, a set index and a line offset.
    pub const fn from_parts(page: u64, set: usize, offset: usize) -> Self {
        Self((page & !(PAGE_SIZE as u64 - 1)) | ((set as u64 & 0x3f) << 6) | (offset as u64 & 0x3f))
    }

    pub const fn set_index(self) -> usize {
        ((self.0 & Self::SET_MASK) >> 6) as usize
    }

    pub const fn line_offset(self) -> usize {
        (self.0 & Self::OFFSET_MASK) as usize
    }

    /// Address of the first byte of the containing cache line.
    pub const fn line_base(self) -> u64 {
        self.0 & !Self::OFFSET_MASK
    }

    pub const fn page_base(self) -> u64 {
        self.0 & !(PAGE_SIZE as u64 - 1)
    }

    pub const fn page_offset(self) -> usize {
        (self.0 & (PAGE_SIZE as u64 - 1)) as usize
    }

    pub const fn offset(self, bytes: u64) -> Self {
        Self(self.0 + bytes)
    }
}

impl From<u64> for Addr {
    fn from(v: u64) -> Self {
        Self(v)
    }
}

impl fmt::LowerHex for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::LowerHex::fmt(&self.0, f)
    }
}

impl fmt::Display for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn set_of_0x1040_is_one() {
        let a = Addr(0x1040);
        assert_eq!(a.set_index(), 1);
        assert_eq!(a.line_offset(), 0);
        assert_eq!(a.line_base(), 0x1040);
    }

    #[test]
    fn from_parts_round_trips() {
        let a = Addr::from_parts(0x7000, 63, 5);
        assert_eq!(a.0, 0x7000 + 63 * 64 + 5);
        assert_eq!(a.set_index(), 63);
        assert_eq!(a.line_offset(), 5);
        assert_eq!(a.page_base(), 0x7000);
    }

    proptest! {
        #[test]
        fn decomposition_matches_arithmetic(v in any::<u64>()) {
            let a = Addr(v);
            prop_assert_eq!(a.set_index() as u64, (v >> 6) % 64);
            prop_assert_eq!(a.line_offset() as u64, v % 64);
            prop_assert_eq!(a.line_base() + a.line_offset() as u64, v);
        }
    }
}
