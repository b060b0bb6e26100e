use crate::addr::PAGE_SIZE;
use crate::sim::{Domain, Op};

use super::{line_stores, VictimPage, VictimProgram};

pub const ENCLAVE_BASE: u64 = 0x7f10_0000_0000;
/// Physical frames the page is loaded into, one per way.
pub const ENCLAVE_FRAMES: usize = 8;

/// An enclave page that the attacker keeps forcing out and back in.
///
/// Each step reloads the page into eight different frames at the same page
/// offsets, so after a step every way of every set holds one copy of the
/// corresponding line of the secret page, dirty.
pub fn victim_enclave(page: &[u8], domain: Domain) -> VictimProgram {
    assert_eq!(page.len(), PAGE_SIZE, "enclave pages are 4 KiB");
    let frames: Vec<u64> = (0..ENCLAVE_FRAMES as u64).map(|i| ENCLAVE_BASE + i * PAGE_SIZE as u64).collect();
    let mut ops = Vec::new();
    for line in 0..PAGE_SIZE / 64 {
        for f in &frames {
            ops.extend(line_stores(f + (line * 64) as u64, &page[line * 64..line * 64 + 64]));
        }
    }
    ops.push(Op::Yield);
    VictimProgram {
        id: "enclave".into(),
        domain,
        pages: frames
            .iter()
            .map(|&base| VictimPage {
                base,
                contents: vec![0; PAGE_SIZE],
            })
            .collect(),
        setup: Vec::new(),
        steps: vec![ops],
    }
}
