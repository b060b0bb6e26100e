use std::collections::{BTreeMap, HashMap};

use crate::addr::{Addr, LINE_SIZE, PAGE_SIZE};

use super::{Domain, SimError};

/// Flat sparse backing store standing in for L2 and everything beyond it.
///
/// Memory is mapped a page at a time; each page carries the security domain
/// that owns it. No timing, no replacement.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Memory {
    lines: HashMap<u64, [u8; LINE_SIZE]>,
    initial: HashMap<u64, [u8; LINE_SIZE]>,
    pages: BTreeMap<u64, Domain>,
}

impl Memory {
    pub fn map_page(&mut self, page: u64, owner: Domain, contents: Option<&[u8]>) -> Result<(), SimError> {
        let page = Addr(page).page_base();
        if self.pages.contains_key(&page) {
            return Err(SimError::AlreadyMapped(page));
        }
        self.pages.insert(page, owner);
        for i in 0..PAGE_SIZE / LINE_SIZE {
            let mut line = [0u8; LINE_SIZE];
            if let Some(src) = contents {
                let start = i * LINE_SIZE;
                if start < src.len() {
                    let end = (start + LINE_SIZE).min(src.len());
                    line[..end - start].copy_from_slice(&src[start..end]);
                }
            }
            let base = page + (i * LINE_SIZE) as u64;
            self.lines.insert(base, line);
            self.initial.insert(base, line);
        }
        Ok(())
    }

    pub fn owner(&self, addr: Addr) -> Option<Domain> {
        self.pages.get(&addr.page_base()).copied()
    }

    pub fn is_mapped(&self, addr: Addr) -> bool {
        self.pages.contains_key(&addr.page_base())
    }

    pub fn read_line(&self, line_base: u64) -> Result<[u8; LINE_SIZE], SimError> {
        self.lines.get(&line_base).copied().ok_or(SimError::Unmapped(line_base))
    }

    pub(crate) fn write_line(&mut self, line_base: u64, data: [u8; LINE_SIZE]) {
        debug_assert!(self.lines.contains_key(&line_base));
        self.lines.insert(line_base, data);
    }

    /// Every mapped line, ordered by address.
    pub fn lines(&self) -> BTreeMap<u64, [u8; LINE_SIZE]> {
        self.lines.iter().map(|(k, v)| (*k, *v)).collect()
    }

    /// Lines whose contents differ from what was mapped, ordered by address.
    pub fn deltas(&self) -> BTreeMap<u64, [u8; LINE_SIZE]> {
        self.lines
            .iter()
            .filter(|(k, v)| self.initial.get(*k) != Some(*v))
            .map(|(k, v)| (*k, *v))
            .collect()
    }

    pub fn pages(&self) -> &BTreeMap<u64, Domain> {
        &self.pages
    }
}
