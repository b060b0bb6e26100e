//! Scripted victim programs. Each constructor returns the program together
//! with its ground truth; attack and reconstruction code only ever sees the
//! program, and only through the simulated machine.

mod aes;
mod enclave;
mod fann;
mod kernel;
mod rsa;

pub use aes::{victim_aes, AesTruth, AES_PAGE};
pub use enclave::{victim_enclave, ENCLAVE_BASE, ENCLAVE_FRAMES};
pub use fann::{victim_fann, FannTruth, FANN_DEFAULT_OFFSET, FANN_PAGE, FANN_WEIGHTS};
pub use kernel::{
    victim_kernel, KernelTruth, HRTICK_OFFSET, KERNEL_PAGE, KERNEL_TEXT_BASE, KASLR_ALIGN, KASLR_SLOTS,
};
pub use rsa::{victim_rsa, RsaTruth, RSA_PAGE};

use crate::addr::{Addr, PAGE_SIZE};
use crate::sim::{Domain, MachineState, Op, SimError};

/// A page the victim owns, with its initial contents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VictimPage {
    pub base: u64,
    pub contents: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VictimProgram {
    pub id: String,
    pub domain: Domain,
    pub pages: Vec<VictimPage>,
    /// Run once before the first step.
    pub setup: Vec<Op>,
    /// Step scripts, used round robin. Each ends at a scheduling point.
    pub steps: Vec<Vec<Op>>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum VictimError {
    #[error("expected {expected} weights, got {got}")]
    WeightCount { expected: usize, got: usize },
    #[error("unsupported size {0}")]
    UnsupportedSize(usize),
    #[error("weights at offset {offset:#x} do not fit in a page")]
    DoesNotFit { offset: usize },
}

impl VictimProgram {
    /// A victim that never touches memory.
    pub fn idle(domain: Domain) -> Self {
        Self {
            id: "idle".into(),
            domain,
            pages: Vec::new(),
            setup: Vec::new(),
            steps: vec![vec![Op::Yield]],
        }
    }

    /// Stores `bytes` at `addr` on every step. The page is zero filled.
    pub fn writer(domain: Domain, addr: Addr, bytes: &[u8]) -> Self {
        let mut ops = Vec::new();
        for (i, chunk) in bytes.chunks(8).enumerate() {
            let mut b = [0u8; 8];
            b[..chunk.len()].copy_from_slice(chunk);
            ops.push(Op::store(addr.offset(i as u64 * 8), b));
        }
        ops.push(Op::Yield);
        Self {
            id: "writer".into(),
            domain,
            pages: vec![VictimPage {
                base: addr.page_base(),
                contents: vec![0; PAGE_SIZE],
            }],
            setup: Vec::new(),
            steps: vec![ops],
        }
    }

    /// Rewrites a whole line on every step.
    pub fn line_writer(domain: Domain, line: Addr, data: [u8; 64]) -> Self {
        Self {
            id: "line-writer".into(),
            domain,
            pages: vec![VictimPage {
                base: line.page_base(),
                contents: vec![0; PAGE_SIZE],
            }],
            setup: Vec::new(),
            steps: vec![vec![Op::store_line(line, data), Op::Yield]],
        }
    }

    /// Loads one 8-byte word of a line whose contents are planted in the
    /// page at start-up.
    pub fn line_reader(domain: Domain, line: Addr, data: [u8; 64]) -> Self {
        let mut contents = vec![0; PAGE_SIZE];
        let off = line.line_base() as usize % PAGE_SIZE;
        contents[off..off + 64].copy_from_slice(&data);
        Self {
            id: "line-reader".into(),
            domain,
            pages: vec![VictimPage {
                base: line.page_base(),
                contents,
            }],
            setup: Vec::new(),
            steps: vec![vec![Op::load(Addr(line.line_base())), Op::Yield]],
        }
    }

    /// Same program under a different security domain label.
    pub fn relabel(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn step(&self, index: usize) -> &[Op] {
        &self.steps[index % self.steps.len()]
    }

    pub fn map_into(&self, m: &mut MachineState) -> Result<(), SimError> {
        for p in &self.pages {
            m.map_page(p.base, self.domain, Some(&p.contents))?;
        }
        Ok(())
    }
}

/// Store ops that write `bytes` at `base`, one full line at a time.
pub(crate) fn line_stores(base: u64, bytes: &[u8]) -> Vec<Op> {
    debug_assert_eq!(base % 64, 0);
    bytes
        .chunks(64)
        .enumerate()
        .map(|(i, c)| {
            let mut line = [0u8; 64];
            line[..c.len()].copy_from_slice(c);
            Op::store_line(base + (i * 64) as u64, line)
        })
        .collect()
}
