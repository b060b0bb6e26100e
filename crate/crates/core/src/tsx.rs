//! Transactional execution, the abort-time sampling primitive and the
//! Flush+Reload probing arrays that carry its result out of the rolled-back
//! transaction.

use std::collections::BTreeSet;

use rand::Rng;

use crate::addr::{Addr, LINE_SIZE, PAGE_SIZE};
use crate::sim::{EntryOrigin, MachineState, Op, SimError, Step, ThreadId, LFB_ENTRIES, NUM_REGS};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum TxStatus {
    Active,
    Aborted,
    Committed,
}

/// An open transaction: the register snapshot and the pre-images of every
/// line written inside it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transaction {
    pub thread: ThreadId,
    pub saved_regs: [u64; NUM_REGS],
    pub undo: Vec<(u64, [u8; LINE_SIZE])>,
    pub status: TxStatus,
}

impl Transaction {
    pub fn begin(thread: ThreadId, regs: [u64; NUM_REGS]) -> Self {
        Self {
            thread,
            saved_regs: regs,
            undo: Vec::new(),
            status: TxStatus::Active,
        }
    }

    /// Remember the pre-transaction contents of a line on its first write.
    pub fn record_line(&mut self, line: u64, before: [u8; LINE_SIZE]) {
        if !self.undo.iter().any(|(l, _)| *l == line) {
            self.undo.push((line, before));
        }
    }
}

/// 256 probe lines, one per byte value, spaced a page apart so each maps to
/// its own page at the same set. Presence is tracked exactly rather than
/// through reload timing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProbingArray {
    present: [bool; 256],
}

impl Default for ProbingArray {
    fn default() -> Self {
        Self { present: [false; 256] }
    }
}

impl ProbingArray {
    pub const STRIDE: usize = PAGE_SIZE;

    /// Address of the probe line for `value` relative to the array base.
    pub fn slot_offset(value: u8) -> usize {
        value as usize * Self::STRIDE
    }

    pub fn flush(&mut self) {
        self.present = [false; 256];
    }

    pub fn touch(&mut self, value: u8) {
        self.present[value as usize] = true;
    }

    /// Indices whose probe line is cached. Does not clear anything.
    pub fn probe(&self) -> BTreeSet<u8> {
        (0..=255u8).filter(|v| self.present[*v as usize]).collect()
    }
}

/// Outcome of one run of the sampling primitive.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct TaaResult {
    /// The byte pair read back through the two probing arrays.
    pub recovered: Option<(u8, u8)>,
    /// Fill-buffer slot the forwarded bytes came from.
    pub source_entry: Option<usize>,
    /// Whether the forward came from an entry other than the intended one.
    pub spurious: bool,
}

pub fn flush_probing_arrays(m: &mut MachineState) {
    for p in m.probes_mut() {
        p.flush();
    }
}

pub fn probe(array: &ProbingArray) -> BTreeSet<u8> {
    array.probe()
}

struct Forward {
    bytes: [u8; 2],
    source: Option<usize>,
    spurious: bool,
}

/// Pick what the aborting load forwards.
///
/// The intended source is the youngest valid entry that is not a demand
/// fill issued by the sampling thread itself: a thread's own completed
/// fills have already been consumed by it. Noise may drop the sample, or
/// redirect it to another valid entry with probability proportional to how
/// many other entries are occupied.
fn select_forward(m: &mut MachineState, thread: ThreadId) -> Option<Forward> {
    let noise = *m.noise();
    let success: f64 = m.rng_mut().gen();
    if success >= noise.taa_success_prob {
        return None;
    }
    let own_fill = EntryOrigin::Fill { thread };
    let primary = m.lfb().youngest_where(|e| e.origin != own_fill);
    let others: Vec<usize> = m
        .lfb()
        .entries()
        .iter()
        .enumerate()
        .filter(|(i, e)| e.valid && Some(*i) != primary)
        .map(|(i, _)| i)
        .collect();
    let p_sub = noise.spurious_entry_prob * others.len() as f64 / (LFB_ENTRIES - 1) as f64;
    let mut spurious = false;
    let mut source = primary;
    if !others.is_empty() && m.rng_mut().gen::<f64>() < p_sub {
        let pick = m.rng_mut().gen_range(0..others.len());
        source = Some(others[pick]);
        spurious = true;
    }
    let ro = m.lfb().read_offset();
    let mut bytes = match source {
        Some(s) => {
            let data = &m.lfb().entries()[s].data;
            [data[ro], data[(ro + 1) % LINE_SIZE]]
        }
        None => [0, 0],
    };
    if spurious {
        for b in bytes.iter_mut() {
            if m.rng_mut().gen::<f64>() < noise.zero_ff_inflation {
                *b = if m.rng_mut().gen::<bool>() { 0x00 } else { 0xff };
            }
        }
    }
    Some(Forward { bytes, source, spurious })
}

/// Run the offset-selecting sampling primitive once.
///
/// Flushes the leak line, opens a transaction and loads the flushed line,
/// which aborts. Before the abort retires, the two trailing loads have set
/// the read offset to `offset`, so the aborting load forwards the bytes at
/// `offset` and `offset + 1` of a fill-buffer entry; they are encoded into
/// the two probing arrays. The caller is expected to have flushed the
/// arrays beforehand.
pub fn taa_leak(m: &mut MachineState, thread: ThreadId, leak: Addr, offset: usize) -> Result<TaaResult, SimError> {
    if m.mitigations().tsx_disabled {
        return Err(SimError::TsxDisabled);
    }
    m.clflush(thread, leak)?;
    m.xbegin(thread)?;
    m.lfb_mut().set_read_offset(offset);
    let forward = select_forward(m, thread);
    if let Some(f) = &forward {
        let [b0, b1] = f.bytes;
        let probes = m.probes_mut();
        probes[0].touch(b0);
        probes[1].touch(b1);
    }
    if m.exec(thread, &Op::load(leak))? != Step::Aborted {
        m.force_abort(thread);
    }
    m.xend(thread)?;

    let lo = m.probes()[0].probe();
    let hi = m.probes()[1].probe();
    let recovered = match (lo.is_empty(), hi.is_empty()) {
        (false, false) => Some(match &forward {
            Some(f) if lo.contains(&f.bytes[0]) && hi.contains(&f.bytes[1]) => (f.bytes[0], f.bytes[1]),
            _ => (*lo.first().unwrap(), *hi.first().unwrap()),
        }),
        _ => None,
    };
    Ok(TaaResult {
        recovered,
        source_entry: forward.as_ref().and_then(|f| f.source),
        spurious: forward.map(|f| f.spurious).unwrap_or(false),
    })
}
