use std::collections::{BTreeMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::addr::{Addr, LINE_SIZE};
use crate::tsx::{ProbingArray, Transaction, TxStatus};

use super::{
    Domain, EntryOrigin, FillBuffer, L1DCache, Memory, NoiseConfig, SimError,
};

pub type ThreadId = usize;

pub const NUM_THREADS: usize = 2;
pub const NUM_REGS: usize = 16;

/// One instruction of a scripted program.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Op {
    /// 8-byte load; the value goes to `reg` when one is given.
    Load { addr: Addr, reg: Option<u8> },
    /// 8-byte store of an immediate.
    Store { addr: Addr, bytes: [u8; 8] },
    /// 8-byte store of a register, little endian.
    StoreReg { addr: Addr, reg: u8 },
    /// Full-line store, as done by a page copy.
    StoreLine { addr: Addr, data: Box<[u8; LINE_SIZE]> },
    Mov { reg: u8, value: u64 },
    Clflush { addr: Addr },
    Verw,
    Xbegin,
    Xend,
    /// Scheduling point. No effect on the machine itself; drivers use it to
    /// hand the core to the other context.
    Yield,
}

impl Op {
    pub fn load(addr: impl Into<Addr>) -> Self {
        Op::Load { addr: addr.into(), reg: None }
    }

    pub fn store(addr: impl Into<Addr>, bytes: [u8; 8]) -> Self {
        Op::Store { addr: addr.into(), bytes }
    }

    pub fn store_u64(addr: impl Into<Addr>, value: u64) -> Self {
        Op::Store { addr: addr.into(), bytes: value.to_le_bytes() }
    }

    pub fn store_line(addr: impl Into<Addr>, data: [u8; LINE_SIZE]) -> Self {
        Op::StoreLine { addr: addr.into(), data: Box::new(data) }
    }
}

/// Result of executing one op.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Step {
    Done,
    Loaded([u8; 8]),
    /// The open transaction aborted (on this op, or on an `Xend` that
    /// closes an already aborted region).
    Aborted,
    Committed,
    /// Op skipped because the enclosing transaction already aborted.
    Skipped,
    Yielded,
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub executed: usize,
    pub aborts: usize,
    pub commits: usize,
    pub yields: usize,
}

/// OS and microcode countermeasures the model knows about.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Mitigations {
    /// Sanitize the fill buffer on every context switch.
    pub verw_on_switch: bool,
    /// Flush the L1-D on every context switch.
    pub l1d_flush_on_switch: bool,
    /// Transactional execution disabled by microcode.
    pub tsx_disabled: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThreadContext {
    pub regs: [u64; NUM_REGS],
    pub domain: Domain,
    pub(crate) tx: Option<Transaction>,
    /// Set after an abort until the matching `Xend`.
    pub(crate) skipping: bool,
}

impl ThreadContext {
    fn new(domain: Domain) -> Self {
        Self {
            regs: [0; NUM_REGS],
            domain,
            tx: None,
            skipping: false,
        }
    }

    pub fn in_transaction(&self) -> bool {
        self.tx.is_some() || self.skipping
    }
}

/// Architecturally visible state: registers and the coherent memory image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArchView {
    pub regs: [[u64; NUM_REGS]; NUM_THREADS],
    pub memory: BTreeMap<u64, [u8; LINE_SIZE]>,
}

/// The whole simulated core.
///
/// Stepping is deterministic: the only randomness comes from the seeded
/// generator, which is consumed solely by the sampling primitive.
#[derive(Clone, Debug)]
pub struct MachineState {
    l1d: L1DCache,
    lfb: FillBuffer,
    l2: Memory,
    threads: [ThreadContext; NUM_THREADS],
    probes: [ProbingArray; 2],
    flushed: HashSet<u64>,
    rng: ChaCha8Rng,
    noise: NoiseConfig,
    mitigations: Mitigations,
    seed: u64,
}

impl MachineState {
    pub fn new(seed: u64, noise: NoiseConfig) -> Result<Self, SimError> {
        noise.validate()?;
        let default_domain = Domain::process(0);
        Ok(Self {
            l1d: L1DCache::new(),
            lfb: FillBuffer::default(),
            l2: Memory::default(),
            threads: [ThreadContext::new(default_domain), ThreadContext::new(default_domain)],
            probes: [ProbingArray::default(), ProbingArray::default()],
            flushed: HashSet::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            noise,
            mitigations: Mitigations::default(),
            seed,
        })
    }

    pub fn with_mitigations(mut self, mitigations: Mitigations) -> Self {
        self.mitigations = mitigations;
        self
    }

    pub fn l1d(&self) -> &L1DCache {
        &self.l1d
    }

    pub fn lfb(&self) -> &FillBuffer {
        &self.lfb
    }

    pub fn l2(&self) -> &Memory {
        &self.l2
    }

    pub fn thread(&self, t: ThreadId) -> &ThreadContext {
        &self.threads[t]
    }

    pub fn noise(&self) -> &NoiseConfig {
        &self.noise
    }

    pub fn mitigations(&self) -> &Mitigations {
        &self.mitigations
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn probes(&self) -> &[ProbingArray; 2] {
        &self.probes
    }

    pub(crate) fn probes_mut(&mut self) -> &mut [ProbingArray; 2] {
        &mut self.probes
    }

    pub(crate) fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub(crate) fn lfb_mut(&mut self) -> &mut FillBuffer {
        &mut self.lfb
    }

    pub fn map_page(&mut self, page: u64, owner: Domain, contents: Option<&[u8]>) -> Result<(), SimError> {
        self.l2.map_page(page, owner, contents)
    }

    /// Set a thread's domain label without going through a context switch.
    pub fn set_domain(&mut self, thread: ThreadId, domain: Domain) -> Result<(), SimError> {
        self.check_thread(thread)?;
        self.threads[thread].domain = domain;
        Ok(())
    }

    /// Hand `thread` to `domain`, applying the configured switch-time
    /// mitigations.
    pub fn context_switch(&mut self, thread: ThreadId, domain: Domain) -> Result<(), SimError> {
        self.check_thread(thread)?;
        if self.mitigations.l1d_flush_on_switch {
            self.l1d_flush();
        }
        if self.mitigations.verw_on_switch {
            self.verw();
        }
        self.threads[thread].domain = domain;
        Ok(())
    }

    fn check_thread(&self, thread: ThreadId) -> Result<(), SimError> {
        if thread < NUM_THREADS {
            Ok(())
        } else {
            Err(SimError::BadThread(thread))
        }
    }

    /// Validate an access of `len` bytes and return the line base.
    fn check_access(&self, thread: ThreadId, addr: Addr, len: usize) -> Result<u64, SimError> {
        self.check_thread(thread)?;
        if addr.line_offset() + len > LINE_SIZE {
            return Err(SimError::CrossesLine { addr: addr.0, len });
        }
        let owner = self.l2.owner(addr).ok_or(SimError::Unmapped(addr.0))?;
        let domain = self.threads[thread].domain;
        if owner != domain {
            return Err(SimError::DomainViolation {
                thread,
                domain,
                owner,
                addr: addr.0,
            });
        }
        Ok(addr.line_base())
    }

    /// Bring a line into the L1-D, returning its (set, way).
    ///
    /// A miss allocates a fill-buffer entry holding the line, then installs
    /// it. A dirty victim is copied into a fresh fill-buffer entry on its
    /// way back to L2. Both entries stay valid after the transfer.
    fn ensure_line(&mut self, thread: ThreadId, line_base: u64) -> Result<(usize, usize), SimError> {
        let set = Addr(line_base).set_index();
        if let Some(way) = self.l1d.lookup(line_base) {
            self.l1d.touch(set, way);
            return Ok((set, way));
        }
        let data = self.l2.read_line(line_base)?;
        self.lfb.allocate(line_base, data, EntryOrigin::Fill { thread });
        let (way, displaced) = self.l1d.install(line_base, data);
        if let Some(old) = displaced {
            if old.dirty {
                self.lfb.allocate(old.tag, old.data, EntryOrigin::Writeback);
                self.l2.write_line(old.tag, old.data);
            }
        }
        self.flushed.remove(&line_base);
        Ok((set, way))
    }

    fn raw_load(&mut self, thread: ThreadId, addr: Addr) -> Result<[u8; 8], SimError> {
        let line = self.check_access(thread, addr, 8)?;
        let (set, way) = self.ensure_line(thread, line)?;
        self.lfb.set_read_offset(addr.line_offset());
        let off = addr.line_offset();
        let mut out = [0u8; 8];
        out.copy_from_slice(&self.l1d.line(set, way).data[off..off + 8]);
        Ok(out)
    }

    fn raw_store(&mut self, thread: ThreadId, addr: Addr, bytes: &[u8]) -> Result<(), SimError> {
        let line = self.check_access(thread, addr, bytes.len())?;
        let (set, way) = self.ensure_line(thread, line)?;
        let off = addr.line_offset();
        let l = self.l1d.line_mut(set, way);
        l.data[off..off + bytes.len()].copy_from_slice(bytes);
        l.dirty = true;
        Ok(())
    }

    /// Current value of a line as a program would observe it. Side-effect
    /// free; meant for drivers and tests, not for simulated code.
    pub fn peek_line(&self, addr: Addr) -> Option<[u8; LINE_SIZE]> {
        let base = addr.line_base();
        if let Some(way) = self.l1d.lookup(base) {
            return Some(self.l1d.line(addr.set_index(), way).data);
        }
        self.l2.read_line(base).ok()
    }

    fn tx_store_prologue(&mut self, thread: ThreadId, addr: Addr, len: usize) -> Result<(), SimError> {
        let line = self.check_access(thread, addr, len)?;
        let before = self.peek_line(addr).ok_or(SimError::Unmapped(addr.0))?;
        if let Some(tx) = self.threads[thread].tx.as_mut() {
            tx.record_line(line, before);
        }
        Ok(())
    }

    /// Roll back the open transaction of `thread`.
    fn abort(&mut self, thread: ThreadId) {
        let Some(mut tx) = self.threads[thread].tx.take() else {
            return;
        };
        tx.status = TxStatus::Aborted;
        self.threads[thread].regs = tx.saved_regs;
        for (line, data) in tx.undo.iter().rev() {
            let set = Addr(*line).set_index();
            if let Some(way) = self.l1d.lookup(*line) {
                self.l1d.line_mut(set, way).data = *data;
            }
            self.l2.write_line(*line, *data);
        }
        self.threads[thread].skipping = true;
    }

    /// Execute a single op on `thread`.
    pub fn exec(&mut self, thread: ThreadId, op: &Op) -> Result<Step, SimError> {
        self.check_thread(thread)?;
        if self.threads[thread].skipping {
            return Ok(match op {
                Op::Xend => {
                    self.threads[thread].skipping = false;
                    Step::Aborted
                }
                _ => Step::Skipped,
            });
        }
        let in_tx = self.threads[thread].tx.is_some();
        match op {
            Op::Load { addr, reg } => {
                if in_tx {
                    let line = match self.check_access(thread, *addr, 8) {
                        Ok(l) => l,
                        Err(_) => {
                            self.abort(thread);
                            return Ok(Step::Aborted);
                        }
                    };
                    if self.flushed.contains(&line) {
                        self.abort(thread);
                        return Ok(Step::Aborted);
                    }
                }
                let v = self.raw_load(thread, *addr)?;
                if let Some(r) = reg {
                    self.threads[thread].regs[*r as usize % NUM_REGS] = u64::from_le_bytes(v);
                }
                Ok(Step::Loaded(v))
            }
            Op::Store { addr, bytes } => self.store_op(thread, *addr, bytes, in_tx),
            Op::StoreReg { addr, reg } => {
                let v = self.threads[thread].regs[*reg as usize % NUM_REGS].to_le_bytes();
                self.store_op(thread, *addr, &v, in_tx)
            }
            Op::StoreLine { addr, data } => {
                let base = Addr(addr.line_base());
                self.store_op(thread, base, &data[..], in_tx)
            }
            Op::Mov { reg, value } => {
                self.threads[thread].regs[*reg as usize % NUM_REGS] = *value;
                Ok(Step::Done)
            }
            Op::Clflush { addr } => {
                if in_tx {
                    self.abort(thread);
                    return Ok(Step::Aborted);
                }
                self.clflush(thread, *addr)?;
                Ok(Step::Done)
            }
            Op::Verw => {
                self.verw();
                Ok(Step::Done)
            }
            Op::Xbegin => {
                self.xbegin(thread)?;
                Ok(Step::Done)
            }
            Op::Xend => match self.xend(thread)? {
                TxStatus::Committed => Ok(Step::Committed),
                _ => Ok(Step::Aborted),
            },
            Op::Yield => Ok(Step::Yielded),
        }
    }

    fn store_op(&mut self, thread: ThreadId, addr: Addr, bytes: &[u8], in_tx: bool) -> Result<Step, SimError> {
        if in_tx
            && self.tx_store_prologue(thread, addr, bytes.len()).is_err() {
                self.abort(thread);
                return Ok(Step::Aborted);
            }
        self.raw_store(thread, addr, bytes)?;
        Ok(Step::Done)
    }

    /// Execute a straight-line program.
    pub fn run(&mut self, thread: ThreadId, ops: &[Op]) -> Result<RunSummary, SimError> {
        let mut summary = RunSummary::default();
        for op in ops {
            match self.exec(thread, op)? {
                Step::Aborted => summary.aborts += 1,
                Step::Committed => summary.commits += 1,
                Step::Yielded => summary.yields += 1,
                _ => {}
            }
            summary.executed += 1;
        }
        Ok(summary)
    }

    /// Load 8 bytes. Inside a transaction a faulting load aborts it and
    /// this returns [`SimError::Aborted`].
    pub fn load(&mut self, thread: ThreadId, addr: Addr) -> Result<[u8; 8], SimError> {
        match self.exec(thread, &Op::load(addr))? {
            Step::Loaded(v) => Ok(v),
            _ => Err(SimError::Aborted(thread)),
        }
    }

    pub fn store(&mut self, thread: ThreadId, addr: Addr, bytes: [u8; 8]) -> Result<(), SimError> {
        self.exec(thread, &Op::store(addr, bytes)).map(|_| ())
    }

    pub fn store_line(&mut self, thread: ThreadId, addr: Addr, data: [u8; LINE_SIZE]) -> Result<(), SimError> {
        self.exec(thread, &Op::store_line(addr, data)).map(|_| ())
    }

    /// Evict one line. Dirty data goes back to L2 through a fill-buffer
    /// entry. The line is remembered as flushed, which makes a later
    /// transactional read of it abort. Lines the thread may not access are
    /// left alone.
    pub fn clflush(&mut self, thread: ThreadId, addr: Addr) -> Result<(), SimError> {
        self.check_thread(thread)?;
        if self.l2.owner(addr) != Some(self.threads[thread].domain) {
            return Ok(());
        }
        let base = addr.line_base();
        if let Some(way) = self.l1d.lookup(base) {
            let old = self.l1d.invalidate(addr.set_index(), way);
            if old.dirty {
                self.lfb.allocate(old.tag, old.data, EntryOrigin::Writeback);
                self.l2.write_line(old.tag, old.data);
            }
        }
        self.flushed.insert(base);
        Ok(())
    }

    /// Overwrite all fill-buffer entries. The L1-D is untouched.
    pub fn verw(&mut self) {
        self.lfb.overwrite();
    }

    /// Invalidate the whole L1-D. Dirty lines are written straight to L2
    /// without passing through the fill buffer.
    pub fn l1d_flush(&mut self) {
        for line in self.l1d.invalidate_all() {
            self.l2.write_line(line.tag, line.data);
        }
    }

    pub fn xbegin(&mut self, thread: ThreadId) -> Result<(), SimError> {
        self.check_thread(thread)?;
        if self.mitigations.tsx_disabled {
            return Err(SimError::TsxDisabled);
        }
        if self.threads[thread].in_transaction() {
            return Err(SimError::NestedTransaction(thread));
        }
        let regs = self.threads[thread].regs;
        self.threads[thread].tx = Some(Transaction::begin(thread, regs));
        Ok(())
    }

    pub fn xend(&mut self, thread: ThreadId) -> Result<TxStatus, SimError> {
        self.check_thread(thread)?;
        if self.threads[thread].skipping {
            self.threads[thread].skipping = false;
            return Ok(TxStatus::Aborted);
        }
        match self.threads[thread].tx.take() {
            Some(_) => Ok(TxStatus::Committed),
            None => Err(SimError::NoTransaction(thread)),
        }
    }

    /// Abort the open transaction of `thread`, if any, as an asynchronous
    /// event would.
    pub fn force_abort(&mut self, thread: ThreadId) {
        if self.threads[thread].tx.is_some() {
            self.abort(thread);
        }
    }

    pub fn is_flush_marked(&self, addr: Addr) -> bool {
        self.flushed.contains(&addr.line_base())
    }

    pub fn arch_view(&self) -> ArchView {
        let mut memory = self.l2.lines();
        for (_, _, line) in self.l1d.valid_lines() {
            memory.insert(line.tag, line.data);
        }
        ArchView {
            regs: [self.threads[0].regs, self.threads[1].regs],
            memory,
        }
    }

    pub fn snapshot(&self) -> super::snapshot::Snapshot {
        super::snapshot::Snapshot::capture(self)
    }
}
