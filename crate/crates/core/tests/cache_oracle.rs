//! The L1-D model against a brute-force recency list per set.

use std::collections::HashMap;

use lfbleak::addr::{Addr, NUM_SETS, NUM_WAYS, PAGE_SIZE};
use lfbleak::{Domain, MachineState, NoiseConfig};
use proptest::prelude::*;

const DOMAIN: Domain = Domain::process(1);
const PAGES: u64 = 24;
const BASE: u64 = 0x100_0000;

fn machine() -> MachineState {
    let mut m = MachineState::new(0, NoiseConfig::off()).unwrap();
    for p in 0..PAGES {
        m.map_page(BASE + p * PAGE_SIZE as u64, DOMAIN, None).unwrap();
    }
    m.set_domain(0, DOMAIN).unwrap();
    m
}

/// Most recent first.
#[derive(Default)]
struct RecencyList(Vec<u64>);

impl RecencyList {
    /// Returns the evicted line, if any.
    fn access(&mut self, line: u64) -> Option<u64> {
        if let Some(i) = self.0.iter().position(|l| *l == line) {
            self.0.remove(i);
            self.0.insert(0, line);
            return None;
        }
        self.0.insert(0, line);
        if self.0.len() > NUM_WAYS {
            self.0.pop()
        } else {
            None
        }
    }
}

fn addr(page: u64, set: usize, offset: u64) -> Addr {
    Addr(Addr::from_parts(BASE + page * PAGE_SIZE as u64, set, 0).0 + offset)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Every access of a 10^4-long trace leaves each touched set holding
    /// exactly the oracle's lines, ranked in the oracle's order.
    #[test]
    fn l1d_matches_recency_oracle(
        trace in prop::collection::vec((0..PAGES, 0usize..4, 0u64..8, any::<bool>()), 10_000)
    ) {
        let mut m = machine();
        let mut oracle: HashMap<usize, RecencyList> = HashMap::new();
        for (page, set, word, store) in trace {
            let a = addr(page, set, word * 8);
            if store {
                m.store(0, a, [page as u8; 8]).unwrap();
            } else {
                m.load(0, a).unwrap();
            }
            oracle.entry(set).or_default().access(a.line_base());
            let lines = m.l1d().set(set);
            let want = &oracle[&set].0;
            for (rank, tag) in want.iter().enumerate() {
                let way = m.l1d().lookup(*tag);
                prop_assert!(way.is_some(), "line {tag:#x} missing");
                prop_assert_eq!(lines[way.unwrap()].lru_rank as usize, rank);
            }
            prop_assert_eq!(lines.iter().filter(|l| l.valid).count(), want.len());
            m.l1d().check_invariants().map_err(TestCaseError::fail)?;
        }
    }

    /// Whatever the access pattern, the values a program can read back are
    /// the values it stored, and every dirty line that left the L1-D went
    /// through a write-back.
    #[test]
    fn writebacks_conserve_data(
        trace in prop::collection::vec((0..PAGES, 0usize..NUM_SETS, 0u64..8, any::<u8>(), any::<bool>()), 2_000)
    ) {
        let mut m = machine();
        let mut reference: HashMap<u64, [u8; 8]> = HashMap::new();
        for (page, set, word, value, store) in trace {
            let a = addr(page, set, word * 8);
            if store {
                m.store(0, a, [value; 8]).unwrap();
                reference.insert(a.0, [value; 8]);
            } else {
                let got = m.load(0, a).unwrap();
                prop_assert_eq!(got, reference.get(&a.0).copied().unwrap_or([0; 8]));
            }
        }
        // The architectural view merges the L1-D over L2; both must agree
        // with the reference on every stored word.
        let view = m.arch_view();
        for (a, bytes) in &reference {
            let line = view.memory[&Addr(*a).line_base()];
            let off = Addr(*a).line_offset();
            prop_assert_eq!(&line[off..off + 8], &bytes[..]);
        }
        // Lines no longer cached must already hold their data in L2.
        for (a, bytes) in &reference {
            if !m.l1d().contains(Addr(*a)) {
                let line = m.l2().read_line(Addr(*a).line_base()).unwrap();
                let off = Addr(*a).line_offset();
                prop_assert_eq!(&line[off..off + 8], &bytes[..]);
            }
        }
    }
}
