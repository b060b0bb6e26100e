use serde::{Deserialize, Serialize};

use crate::addr::Addr;
use crate::sim::{Domain, MachineState, Op, ThreadId};
use crate::tsx::{flush_probing_arrays, taa_leak, TaaResult};
use crate::victims::VictimProgram;

use super::{build_eviction_set, AttackError, EvictionSet, LeakHistogram};

pub const ATTACKER_THREAD: ThreadId = 0;
pub const ATTACKER_DOMAIN: Domain = Domain::process(1);
/// Attacker page whose first line is flushed and read in every sample.
pub const LEAK_PAGE: u64 = 0x2000_0000;

/// Where the victim runs relative to the attacker.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThreadMode {
    /// Victim and attacker take turns on the attacker's logical thread,
    /// with a context switch in between.
    SameThread,
    /// Victim runs on the sibling hyper-thread.
    CrossThread,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerwPlacement {
    Never,
    BeforeEvict,
    AfterEvict,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Access {
    Read,
    Write,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackOptions {
    pub evset_size: usize,
    /// Attacker-issued buffer overwrite.
    pub verw: VerwPlacement,
}

impl Default for AttackOptions {
    fn default() -> Self {
        Self {
            evset_size: 8,
            verw: VerwPlacement::BeforeEvict,
        }
    }
}

/// An attacker and one victim sharing a simulated core.
#[derive(Clone, Debug)]
pub struct Session {
    machine: MachineState,
    mode: ThreadMode,
    victim: VictimProgram,
    steps_run: usize,
}

impl Session {
    pub fn new(mut machine: MachineState, victim: VictimProgram, mode: ThreadMode) -> Result<Self, AttackError> {
        for page in EvictionSet::region_pages() {
            machine.map_page(page, ATTACKER_DOMAIN, None)?;
        }
        machine.map_page(LEAK_PAGE, ATTACKER_DOMAIN, None)?;
        victim.map_into(&mut machine)?;
        machine.set_domain(ATTACKER_THREAD, ATTACKER_DOMAIN)?;
        if mode == ThreadMode::CrossThread {
            machine.set_domain(1, victim.domain)?;
        }
        let mut s = Self {
            machine,
            mode,
            victim,
            steps_run: 0,
        };
        run_as_victim(&mut s.machine, mode, s.victim.domain, &s.victim.setup)?;
        Ok(s)
    }

    pub fn machine(&self) -> &MachineState {
        &self.machine
    }

    pub fn machine_mut(&mut self) -> &mut MachineState {
        &mut self.machine
    }

    pub fn into_machine(self) -> MachineState {
        self.machine
    }

    pub fn mode(&self) -> ThreadMode {
        self.mode
    }

    pub fn victim_thread(&self) -> ThreadId {
        match self.mode {
            ThreadMode::SameThread => ATTACKER_THREAD,
            ThreadMode::CrossThread => 1,
        }
    }

    /// Let the victim run one step of its script.
    pub fn victim_step(&mut self) -> Result<(), AttackError> {
        let i = self.steps_run;
        self.steps_run += 1;
        run_as_victim(&mut self.machine, self.mode, self.victim.domain, self.victim.step(i))
    }

    /// One victim step to get its working set cached, then clear the
    /// buffer of whatever that left behind.
    pub fn warm_up(&mut self) -> Result<(), AttackError> {
        self.victim_step()?;
        self.machine.verw();
        Ok(())
    }

    pub fn verw(&mut self) {
        self.machine.verw();
    }

    pub fn evict(&mut self, evset: &EvictionSet) -> Result<(), AttackError> {
        Ok(evset.access(&mut self.machine, ATTACKER_THREAD)?)
    }

    /// Flush the probing arrays and run the sampling primitive once.
    pub fn sample(&mut self, offset: usize) -> Result<TaaResult, AttackError> {
        flush_probing_arrays(&mut self.machine);
        Ok(taa_leak(&mut self.machine, ATTACKER_THREAD, Addr(LEAK_PAGE), offset)?)
    }

    fn evict_with_verw(&mut self, evset: &EvictionSet, verw: VerwPlacement) -> Result<(), AttackError> {
        if verw == VerwPlacement::BeforeEvict {
            self.verw();
        }
        self.evict(evset)?;
        if verw == VerwPlacement::AfterEvict {
            self.verw();
        }
        Ok(())
    }
}

fn run_as_victim(m: &mut MachineState, mode: ThreadMode, domain: Domain, ops: &[Op]) -> Result<(), AttackError> {
    match mode {
        ThreadMode::CrossThread => {
            m.run(1, ops)?;
        }
        ThreadMode::SameThread => {
            m.context_switch(ATTACKER_THREAD, domain)?;
            m.run(ATTACKER_THREAD, ops)?;
            m.context_switch(ATTACKER_THREAD, ATTACKER_DOMAIN)?;
        }
    }
    Ok(())
}

/// Victim writes, attacker evicts the target set so the modified line
/// passes through the fill buffer, then samples it.
pub fn attack_write(
    session: &mut Session,
    target_set: usize,
    offset: usize,
    iterations: usize,
    opts: &AttackOptions,
) -> Result<LeakHistogram, AttackError> {
    let evset = build_eviction_set(target_set, opts.evset_size)?;
    let mut hist = LeakHistogram::new();
    session.warm_up()?;
    for _ in 0..iterations {
        session.victim_step()?;
        session.evict_with_verw(&evset, opts.verw)?;
        if let Some(pair) = session.sample(offset)?.recovered {
            hist.add(target_set, offset, pair);
        }
    }
    Ok(hist)
}

/// Attacker evicts the target set, the victim on the sibling thread reads
/// its data back in, and the refetch is sampled.
pub fn attack_read(
    session: &mut Session,
    target_set: usize,
    offset: usize,
    iterations: usize,
    opts: &AttackOptions,
) -> Result<LeakHistogram, AttackError> {
    if session.mode() != ThreadMode::CrossThread {
        return Err(AttackError::UnsupportedMode);
    }
    read_loop(session, target_set, offset, iterations, opts)
}

fn read_loop(
    session: &mut Session,
    target_set: usize,
    offset: usize,
    iterations: usize,
    opts: &AttackOptions,
) -> Result<LeakHistogram, AttackError> {
    let evset = build_eviction_set(target_set, opts.evset_size)?;
    let mut hist = LeakHistogram::new();
    session.warm_up()?;
    for _ in 0..iterations {
        match session.mode() {
            ThreadMode::CrossThread => {
                session.evict_with_verw(&evset, opts.verw)?;
                session.victim_step()?;
            }
            ThreadMode::SameThread => {
                session.victim_step()?;
                session.evict_with_verw(&evset, opts.verw)?;
            }
        }
        if let Some(pair) = session.sample(offset)?.recovered {
            hist.add(target_set, offset, pair);
        }
    }
    Ok(hist)
}

/// The experiment that tells reads from writes: like the attack flows,
/// but sequential reads are allowed so their absence can be observed.
pub fn leakage_source(
    session: &mut Session,
    access: Access,
    target_set: usize,
    offset: usize,
    iterations: usize,
    opts: &AttackOptions,
) -> Result<LeakHistogram, AttackError> {
    match access {
        Access::Write => attack_write(session, target_set, offset, iterations, opts),
        Access::Read => read_loop(session, target_set, offset, iterations, opts),
    }
}
