//! Hand-worked traces through the machine.

use lfbleak::addr::{Addr, PAGE_SIZE};
use lfbleak::sim::EntryOrigin;
use lfbleak::{Domain, MachineState, NoiseConfig, Op};
use serde_json::json;

const P1: Domain = Domain::process(1);
const PAGE: u64 = 0x10000;

fn machine() -> MachineState {
    let mut m = MachineState::new(0, NoiseConfig::off()).unwrap();
    m.map_page(PAGE, P1, None).unwrap();
    m.set_domain(0, P1).unwrap();
    m
}

fn zeros() -> String {
    "00".repeat(64)
}

#[test]
fn load_store_flush_snapshot() {
    let mut m = machine();
    m.load(0, Addr(PAGE)).unwrap();
    m.store(0, Addr(PAGE + 0x40), [1, 2, 3, 4, 5, 6, 7, 8]).unwrap();
    m.clflush(0, Addr(PAGE + 0x40)).unwrap();

    let stored = format!("0102030405060708{}", "00".repeat(56));
    let expected = json!({
        "l1d": [
            { "set": 0, "way": 0, "tag": "0x10000", "dirty": false, "lru_rank": 0, "data": zeros() }
        ],
        "lfb": {
            "read_offset": 0,
            "entries": [
                { "slot": 0, "tag": "0x10000", "age": 1, "origin": "fill:0", "data": zeros() },
                { "slot": 1, "tag": "0x10040", "age": 2, "origin": "fill:0", "data": zeros() },
                { "slot": 2, "tag": "0x10040", "age": 3, "origin": "writeback", "data": stored }
            ]
        },
        "l2": [
            { "line": "0x10040", "data": stored }
        ]
    });
    let got: serde_json::Value = serde_json::from_str(&m.snapshot().to_json()).unwrap();
    assert_eq!(got, expected);
}

#[test]
fn ninth_line_in_a_set_writes_back_the_dirty_oldest() {
    let mut m = MachineState::new(0, NoiseConfig::off()).unwrap();
    for p in 0..9u64 {
        m.map_page(PAGE + p * PAGE_SIZE as u64, P1, None).unwrap();
    }
    m.set_domain(0, P1).unwrap();
    let line = |p: u64| Addr::from_parts(PAGE + p * PAGE_SIZE as u64, 3, 0);
    m.store(0, line(0), [0xab; 8]).unwrap();
    for p in 1..8 {
        m.load(0, line(p)).unwrap();
    }
    assert!(m.l1d().contains(line(0)));
    assert_eq!(m.lfb().valid_count(), 8);

    m.load(0, line(8)).unwrap();
    assert!(!m.l1d().contains(line(0)));
    let youngest = m.lfb().youngest_where(|_| true).unwrap();
    let wb = &m.lfb().entries()[youngest];
    assert_eq!(wb.origin, EntryOrigin::Writeback);
    assert_eq!(wb.tag, line(0).0);
    assert_eq!(&wb.data[..8], &[0xab; 8]);
    assert_eq!(&m.l2().read_line(line(0).0).unwrap()[..8], &[0xab; 8]);
    // The fill for the ninth line came first, then the write-back.
    let fill = m
        .lfb()
        .youngest_where(|e| e.origin == EntryOrigin::Fill { thread: 0 })
        .unwrap();
    assert_eq!(m.lfb().entries()[fill].tag, line(8).0);
    assert!(m.lfb().entries()[fill].age < wb.age);
}

#[test]
fn clean_flush_allocates_nothing() {
    let mut m = machine();
    m.load(0, Addr(PAGE)).unwrap();
    let before = m.lfb().clone();
    m.clflush(0, Addr(PAGE)).unwrap();
    assert_eq!(m.lfb(), &before);
    assert!(!m.l1d().contains(Addr(PAGE)));
    assert!(m.is_flush_marked(Addr(PAGE)));
}

#[test]
fn same_seed_same_run() {
    let run = || {
        let mut m = MachineState::new(77, NoiseConfig::default()).unwrap();
        m.map_page(PAGE, P1, None).unwrap();
        m.map_page(0x2000_0000, P1, None).unwrap();
        m.set_domain(0, P1).unwrap();
        let ops: Vec<Op> = (0..200u64)
            .map(|i| Op::store_u64(Addr(PAGE + (i * 72) % PAGE_SIZE as u64 / 8 * 8), i))
            .collect();
        m.run(0, &ops).unwrap();
        let mut leaks = Vec::new();
        for off in 0..63 {
            lfbleak::tsx::flush_probing_arrays(&mut m);
            leaks.push(lfbleak::tsx::taa_leak(&mut m, 0, Addr(0x2000_0000), off).unwrap());
        }
        (m.snapshot().to_json(), leaks)
    };
    assert_eq!(run(), run());
}
