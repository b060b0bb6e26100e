use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::addr::PAGE_SIZE;
use crate::sim::{Domain, DomainKind, Op};

use super::{line_stores, VictimPage, VictimProgram};

/// Page holding the timer structure and the syscall stack frame.
pub const KERNEL_PAGE: u64 = 0xffff_c900_0040_0000;
pub const KERNEL_TEXT_BASE: u64 = 0xffff_ffff_8000_0000;
/// Randomization granularity and number of possible slides.
pub const KASLR_ALIGN: u64 = 0x20_0000;
pub const KASLR_SLOTS: u64 = 512;
/// Link-time offset of the timer callback stored in the timer structure.
pub const HRTICK_OFFSET: u64 = 0x010f_2ac0;

const POINTER_LINE: usize = 9;
const POINTER_OFFSET: usize = 0x10;
const CANARY_LINE: usize = 41;
const CANARY_OFFSET: usize = 0x28;
/// Seed for the page contents that do not change between boots.
const STATIC_SEED: u64 = 0x005e_ed0f_1e55;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KernelTruth {
    pub slide: u64,
    pub pointer: u64,
    pub canary: u64,
    /// (line, offset) of the pointer and the canary within the page.
    pub pointer_slot: (usize, usize),
    pub canary_slot: (usize, usize),
}

/// One boot of the kernel. `boot_seed` draws the text slide and the stack
/// canary; everything else on the page is the same on every boot.
///
/// Each step is a system call: the timer is re-armed, which rewrites the
/// callback pointer, and the entry path writes a stack frame holding the
/// canary. Both lines are read back before returning.
pub fn victim_kernel(boot_seed: u64, domain: Domain) -> (VictimProgram, KernelTruth) {
    debug_assert!(matches!(domain.kind, DomainKind::Kernel | DomainKind::Hypervisor | DomainKind::VmGuest));
    let mut boot = ChaCha8Rng::seed_from_u64(boot_seed);
    let slide = boot.gen_range(1..KASLR_SLOTS) * KASLR_ALIGN;
    // Low byte zero, remaining bytes nonzero.
    let mut canary = 0u64;
    for i in 1..8 {
        canary |= (boot.gen_range(1..=255u8) as u64) << (8 * i);
    }
    let pointer = KERNEL_TEXT_BASE + slide + HRTICK_OFFSET;

    let mut fixed = ChaCha8Rng::seed_from_u64(STATIC_SEED);
    let mut page = vec![0u8; PAGE_SIZE];
    for line in [POINTER_LINE, CANARY_LINE] {
        for b in &mut page[line * 64..line * 64 + 64] {
            *b = fixed.gen_range(1..=255);
        }
    }
    let p = POINTER_LINE * 64 + POINTER_OFFSET;
    page[p..p + 8].copy_from_slice(&pointer.to_le_bytes());
    let c = CANARY_LINE * 64 + CANARY_OFFSET;
    page[c..c + 8].copy_from_slice(&canary.to_le_bytes());

    let mut ops = Vec::new();
    for line in [POINTER_LINE, CANARY_LINE] {
        let base = KERNEL_PAGE + (line * 64) as u64;
        ops.extend(line_stores(base, &page[line * 64..line * 64 + 64]));
        ops.push(Op::load(base));
    }
    ops.push(Op::Yield);

    // The kernel image on the page before any syscall: the lines exist but
    // hold nothing secret yet.
    let program = VictimProgram {
        id: "kernel".into(),
        domain,
        pages: vec![VictimPage {
            base: KERNEL_PAGE,
            contents: vec![0; PAGE_SIZE],
        }],
        setup: Vec::new(),
        steps: vec![ops],
    };
    let truth = KernelTruth {
        slide,
        pointer,
        canary,
        pointer_slot: (POINTER_LINE, POINTER_OFFSET),
        canary_slot: (CANARY_LINE, CANARY_OFFSET),
    };
    (program, truth)
}
