//! Properties of the leak channel as a whole.

use lfbleak::addr::Addr;
use lfbleak::attack::{attack_write, AttackOptions, Session, ThreadMode};
use lfbleak::tsx::{flush_probing_arrays, taa_leak};
use lfbleak::victims::VictimProgram;
use lfbleak::{Domain, MachineState, NoiseConfig, Op};
use proptest::prelude::*;

const ATK: Domain = Domain::process(1);
const VIC: Domain = Domain::process(2);

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// A dirty victim line evicted by the attacker sits in the fill buffer
    /// afterwards, and the noiseless channel returns any pair of it.
    #[test]
    fn evicted_line_is_left_in_the_buffer(
        data in prop::collection::vec(any::<u8>(), 64),
        set in 0usize..64,
        offset in 0usize..63,
    ) {
        let line: [u8; 64] = data.try_into().unwrap();
        let addr = Addr::from_parts(0x7000_0000, set, 0);
        let victim = VictimProgram::line_writer(VIC, addr, line);
        let mut s = Session::new(MachineState::new(1, NoiseConfig::off()).unwrap(), victim, ThreadMode::SameThread).unwrap();
        let h = attack_write(&mut s, set, offset, 1, &AttackOptions::default()).unwrap();
        prop_assert!(s.machine().lfb().holds_line(&line));
        prop_assert_eq!(h.modal(set, offset).map(|(p, _)| p), Some((line[offset], line[offset + 1])));
    }

    /// Running the sampling primitive anywhere in a program leaves the
    /// architectural state alone.
    #[test]
    fn sampling_is_architecturally_invisible(
        ops in prop::collection::vec((0u64..64, any::<u64>(), 0u8..3), 1..60),
        cut in 0usize..60,
        offset in 0usize..63,
        seed in any::<u64>(),
    ) {
        let page = 0x50_0000u64;
        let leak = Addr(0x60_0000);
        let mut m = MachineState::new(seed, NoiseConfig::default()).unwrap();
        m.map_page(page, ATK, None).unwrap();
        m.map_page(leak.0, ATK, None).unwrap();
        m.set_domain(0, ATK).unwrap();
        let program: Vec<Op> = ops
            .iter()
            .map(|(w, v, kind)| {
                let a = Addr(page + w * 64 + (v % 8) * 8);
                match kind {
                    0 => Op::store_u64(a, *v),
                    1 => Op::Load { addr: a, reg: Some((*v % 4) as u8) },
                    _ => Op::Mov { reg: (*v % 4) as u8, value: *v },
                }
            })
            .collect();
        let cut = cut.min(program.len());
        let mut plain = m.clone();
        plain.run(0, &program).unwrap();

        m.run(0, &program[..cut]).unwrap();
        flush_probing_arrays(&mut m);
        taa_leak(&mut m, 0, leak, offset).unwrap();
        m.run(0, &program[cut..]).unwrap();

        prop_assert_eq!(plain.arch_view(), m.arch_view());
        prop_assert_eq!(plain.l2().lines(), m.l2().lines());
    }
}
