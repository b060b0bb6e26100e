//! Acceptance run. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use lfbleak::addr::{Addr, PAGE_SIZE};
use lfbleak::attack::{leakage_source, stitch, Access, AttackOptions, LeakSample, Session, ThreadMode, VerwPlacement};
use lfbleak::crypto::aes::{expand_key, KeySize};
use lfbleak::crypto::RsaKey;
use lfbleak::recon::weights::{naive_modal, synthetic_candidates, top_k_accuracy};
use lfbleak::recon::{aes_locate, rsa_reconstruct, weight_filter, ChunkPool, WeightFilter};
use lfbleak::sim::{MachineState, Mitigations, Op, NoiseConfig};
use lfbleak::tsx::{flush_probing_arrays, taa_leak};
use lfbleak::victims::{VictimProgram, FANN_WEIGHTS};
use lfbleak::Domain;
use lfbleak_cli::config::Config;
use lfbleak_cli::jobs::{execute, execute_and_write, replay, Job};
use lfbleak_cli::report::Outcome;
use lfbleak_cli::scenarios::{run_scenario, Scenario};
use lfbleak_cli::sweep::{diagonal_rows, run_sweep, SweepKind};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    check(
        elapsed < Duration::from_secs(limit_s),
        format!("took {:.1}s, limit {limit_s}s", elapsed.as_secs_f64()),
    )
}

fn quiet(seed: u64) -> Config {
    Config {
        seed,
        noise: NoiseConfig::off(),
        ..Config::default()
    }
}

fn eviction_size_step() -> Verdict {
    let t = Instant::now();
    let cfg = Config {
        iterations: Some(64),
        ..quiet(1)
    };
    let run = run_sweep(SweepKind::EvictionSize, &cfg).map_err(|e| e.to_string())?;
    check(run.cells.len() == 12, "expected sizes 1-12")?;
    for c in &run.cells {
        let want = if c.x >= 8 { 1.0 } else { 0.0 };
        check(c.correct_rate == want, format!("size {} rate {}", c.x, c.correct_rate))?;
    }
    within(t.elapsed(), 5)?;
    Ok(format!("rate 0 below 8, 1 from 8 ({:.2}s)", t.elapsed().as_secs_f64()))
}

fn set_diagonal() -> Verdict {
    let t = Instant::now();
    let cfg = Config {
        iterations: Some(4),
        ..quiet(1)
    };
    let run = run_sweep(SweepKind::SetMatrix, &cfg).map_err(|e| e.to_string())?;
    check(run.cells.len() == 64 * 64, "expected a 64x64 matrix")?;
    for c in &run.cells {
        check((c.correct > 0) == (c.x == c.y), format!("cell ({}, {}) correct {}", c.x, c.y, c.correct))?;
    }
    for seed in 1..=20 {
        let cfg = Config {
            seed,
            iterations: Some(32),
            ..Config::default()
        };
        let run = run_sweep(SweepKind::SetMatrix, &cfg).map_err(|e| e.to_string())?;
        let rows = diagonal_rows(&run.cells);
        check(rows.len() == 64 && rows.iter().all(|r| *r), format!("seed {seed}: argmax off the diagonal"))?;
    }
    within(t.elapsed(), 60)?;
    Ok(format!("noiseless diagonal only, argmax diagonal for seeds 1-20 ({:.1}s)", t.elapsed().as_secs_f64()))
}

fn offset_selection() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut line = [0u8; 64];
    rng.fill(&mut line[..]);
    let addr = Addr::from_parts(0x7000_0000, 11, 0);
    let victim = VictimProgram::line_writer(Domain::process(2), addr, line);
    let mut s = Session::new(MachineState::new(1, NoiseConfig::off()).unwrap(), victim, ThreadMode::SameThread)
        .map_err(|e| e.to_string())?;
    for k in 0..63 {
        let h = lfbleak::attack::attack_write(&mut s, 11, k, 4, &AttackOptions::default()).map_err(|e| e.to_string())?;
        let modal = h.modal(11, k).map(|(p, _)| p);
        check(modal == Some((line[k], line[k + 1])), format!("offset {k}: {modal:?}"))?;
        check(h.cell(11, k).count() == 1, format!("offset {k}: more than one pair"))?;
    }
    within(t.elapsed(), 5)?;
    Ok(format!("all 63 offsets exact ({:.2}s)", t.elapsed().as_secs_f64()))
}

fn triad() -> Verdict {
    const SET: usize = 9;
    let data: [u8; 64] = std::array::from_fn(|i| 0x80 | i as u8);
    let line = Addr::from_parts(0x7000_0000, SET, 0);
    let secret = (data[4], data[5]);
    let run = |access: Access, verw: VerwPlacement, mitigations: Mitigations| -> Result<u64, String> {
        let victim = match access {
            Access::Write => VictimProgram::line_writer(Domain::process(2), line, data),
            Access::Read => VictimProgram::line_reader(Domain::process(2), line, data),
        };
        let m = MachineState::new(5, NoiseConfig::off()).unwrap().with_mitigations(mitigations);
        let mut s = Session::new(m, victim, ThreadMode::SameThread).map_err(|e| e.to_string())?;
        let opts = AttackOptions { verw, ..AttackOptions::default() };
        let h = leakage_source(&mut s, access, SET, 4, 50, &opts).map_err(|e| e.to_string())?;
        Ok(h.count(SET, 4, secret))
    };
    let none = Mitigations::default();
    let a_w = run(Access::Write, VerwPlacement::AfterEvict, none)?;
    let a_r = run(Access::Read, VerwPlacement::AfterEvict, none)?;
    check(a_w == 0 && a_r == 0, format!("verw after eviction: write {a_w}, read {a_r}"))?;
    let b_w = run(Access::Write, VerwPlacement::BeforeEvict, none)?;
    let b_r = run(Access::Read, VerwPlacement::BeforeEvict, none)?;
    check(b_w > 0 && b_r == 0, format!("verw before eviction: write {b_w}, read {b_r}"))?;
    let flush = Mitigations {
        l1d_flush_on_switch: true,
        ..none
    };
    let c_w = run(Access::Write, VerwPlacement::BeforeEvict, flush)?;
    check(c_w == 0, format!("l1d flush: write {c_w}"))?;
    Ok(format!("after-evict 0/0, before-evict write {b_w} read 0, l1d flush 0"))
}

/// Random single-thread program over two pages of each thread's domain.
fn random_program(rng: &mut ChaCha8Rng, pages: &[u64]) -> Vec<Op> {
    (0..rng.gen_range(1..40))
        .map(|_| {
            let page = pages[rng.gen_range(0..pages.len())];
            let addr = Addr(page + rng.gen_range(0..PAGE_SIZE as u64 / 8) * 8);
            match rng.gen_range(0..6) {
                0 | 1 => Op::Load {
                    addr,
                    reg: Some(rng.gen_range(0..4)),
                },
                2 => Op::store_u64(addr, rng.gen()),
                3 => Op::StoreReg {
                    addr,
                    reg: rng.gen_range(0..4),
                },
                4 => Op::Mov {
                    reg: rng.gen_range(0..4),
                    value: rng.gen(),
                },
                _ => Op::Clflush { addr },
            }
        })
        .collect()
}

fn transactional_isolation() -> Verdict {
    let t = Instant::now();
    let atk = Domain::process(1);
    let vic = Domain::process(2);
    let leak = Addr(0x4000_0000);
    let atk_pages: Vec<u64> = (0..2).map(|i| 0x1000_0000 + i * 0x1000).collect();
    let vic_pages: Vec<u64> = (0..2).map(|i| 0x3000_0000 + i * 0x1000).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..10_000 {
        let mut base = MachineState::new(case, NoiseConfig::off()).unwrap();
        base.map_page(leak.0, atk, None).unwrap();
        for p in &atk_pages {
            base.map_page(*p, atk, None).unwrap();
        }
        for p in &vic_pages {
            base.map_page(*p, vic, None).unwrap();
        }
        base.set_domain(0, atk).unwrap();
        base.set_domain(1, vic).unwrap();
        let prog0 = random_program(&mut rng, &atk_pages);
        let prog1 = random_program(&mut rng, &vic_pages);
        let cut = rng.gen_range(0..=prog0.len());
        let offset = rng.gen_range(0..63);

        let mut plain = base.clone();
        let mut with_tx = base;
        for m in [&mut plain, &mut with_tx] {
            m.run(1, &prog1).unwrap();
            m.run(0, &prog0[..cut]).unwrap();
        }
        flush_probing_arrays(&mut with_tx);
        taa_leak(&mut with_tx, 0, leak, offset).map_err(|e| e.to_string())?;
        for m in [&mut plain, &mut with_tx] {
            m.run(0, &prog0[cut..]).unwrap();
        }
        check(plain.arch_view() == with_tx.arch_view(), format!("case {case}: architectural view differs"))?;
        check(plain.l2().lines() == with_tx.l2().lines(), format!("case {case}: L2 differs"))?;
        let committed = |m: &MachineState| m.l1d().valid_lines().map(|(s, w, l)| (s, w, l.clone())).collect::<Vec<_>>();
        check(committed(&plain) == committed(&with_tx), format!("case {case}: L1-D lines differ"))?;
        check(
            with_tx.probes().iter().any(|p| !p.probe().is_empty()),
            format!("case {case}: probes untouched"),
        )?;
    }
    within(t.elapsed(), 30)?;
    Ok(format!("10000 programs unchanged ({:.1}s)", t.elapsed().as_secs_f64()))
}

fn rsa_reconstruction() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut summary = Vec::new();
    for (bits, keys) in [(512, 100), (1024, 100), (2048, 10), (4096, 10)] {
        let mut offline = Duration::ZERO;
        for k in 0..keys {
            let key = RsaKey::generate(bits, &mut rng);
            let pb = key.prime_bytes();
            let mut bytes = RsaKey::limbs_le(&key.p, pb);
            bytes.extend(RsaKey::limbs_le(&key.q, pb));
            let mut chunks: Vec<u64> = bytes
                .chunks_exact(8)
                .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            chunks.shuffle(&mut rng);
            let t = Instant::now();
            let pool = ChunkPool::new(8, chunks, key.n.clone()).map_err(|e| e.to_string())?;
            let (p, q) = rsa_reconstruct(&pool, bits).map_err(|e| format!("{bits}-bit key {k}: {e}"))?;
            offline += t.elapsed();
            check(&p * &q == key.n, format!("{bits}-bit key {k}: p*q != N"))?;
        }
        if bits == 4096 {
            within(offline, 60)?;
        }
        summary.push(format!("{keys}x{bits} ({:.2}s)", offline.as_secs_f64()));
    }
    Ok(format!("all recovered: {}", summary.join(", ")))
}

fn aes_location() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut windows = 0u64;
    let mut false_positives = 0usize;
    for size in [KeySize::Aes128, KeySize::Aes192, KeySize::Aes256] {
        let len = size.schedule_bytes();
        for placement in 0..30 {
            let mut key = vec![0u8; size.key_bytes()];
            rng.fill(&mut key[..]);
            let schedule = expand_key(&key).unwrap();
            let mut page = vec![0u8; PAGE_SIZE];
            rng.fill(&mut page[..]);
            let at = rng.gen_range(0..=PAGE_SIZE - len);
            page[at..at + len].copy_from_slice(&schedule);
            let dump: Vec<Option<u8>> = page.iter().map(|b| Some(*b)).collect();
            let found = aes_locate(&dump, size, 1.0);
            let best = found.first().ok_or(format!("{size:?} placement {placement}: nothing found"))?;
            check(
                best.offset == at && best.key == key && best.match_score == 1.0,
                format!("{size:?} placement {placement}: wrong top candidate"),
            )?;
        }
        let mut n = 0u64;
        while n < 1_000_000 {
            let mut page = vec![0u8; PAGE_SIZE];
            rng.fill(&mut page[..]);
            let dump: Vec<Option<u8>> = page.iter().map(|b| Some(*b)).collect();
            false_positives += aes_locate(&dump, size, 0.9).len();
            n += (PAGE_SIZE - len + 1) as u64;
        }
        windows += n;
    }
    check(false_positives == 0, format!("{false_positives} false positives"))?;
    Ok(format!("90/90 placements at rank 1, 0 false positives in {windows} windows"))
}

fn stitching() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut flagged = 0usize;
    for i in 0..1000 {
        let mut line = [0u8; 64];
        rng.fill(&mut line[..]);
        let samples: Vec<LeakSample> = (0..63usize)
            .map(|k| LeakSample {
                set: 0,
                offset: k as u8,
                b0: line[k],
                b1: line[k + 1],
                count: 1,
            })
            .collect();
        let full = stitch(&samples);
        let exact: Vec<Option<u8>> = line.iter().map(|b| Some(*b)).collect();
        check(full.bytes == exact, format!("line {i}: complete pairs not exact"))?;
        let kept: Vec<LeakSample> = samples.into_iter().filter(|_| rng.gen::<f64>() >= 0.1).collect();
        let partial = stitch(&kept);
        for (j, (b, ok)) in partial.bytes.iter().zip(&partial.agree).enumerate() {
            if *ok {
                flagged += 1;
                check(*b == Some(line[j]), format!("line {i}: flagged byte {j} wrong"))?;
            }
        }
    }
    Ok(format!("1000 lines exact, {flagged} flagged bytes correct after 10% drop"))
}

fn weight_filtering() -> Verdict {
    let noise = NoiseConfig {
        taa_success_prob: 0.9,
        spurious_entry_prob: 0.6,
        zero_ff_inflation: 0.5,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut naive_sum, mut filtered_sum) = (0.0, 0.0);
    for model in 0..20 {
        let weights: Vec<f32> = (0..FANN_WEIGHTS)
            .map(|_| {
                let m: f32 = rng.gen_range(0.05..4.0);
                if rng.gen() {
                    -m
                } else {
                    m
                }
            })
            .collect();
        let slots = synthetic_candidates(&weights, 6, &noise, &mut rng);
        let filtered = top_k_accuracy(&weight_filter(&slots, &WeightFilter::default()), &weights, 1);
        let naive = naive_modal(&slots)
            .iter()
            .zip(&weights)
            .filter(|(n, w)| **n == Some(w.to_bits()))
            .count() as f64
            / weights.len() as f64;
        check(filtered > naive, format!("model {model}: filtered {filtered:.3} vs naive {naive:.3}"))?;
        naive_sum += naive;
        filtered_sum += filtered;
    }
    Ok(format!("mean top-1 naive {:.3} -> filtered {:.3}", naive_sum / 20.0, filtered_sum / 20.0))
}

fn end_to_end() -> Verdict {
    let mut line = Vec::new();
    for scenario in [
        Scenario::Aes { bits: 128 },
        Scenario::Rsa { bits: 1024 },
        Scenario::Kaslr,
        Scenario::Canary,
    ] {
        for seed in 1..=5 {
            let cfg = Config {
                seed,
                ..Config::default()
            };
            let run = run_scenario(scenario, &cfg).map_err(|e| e.to_string())?;
            check(
                run.report.outcome == Outcome::Verified,
                format!("{scenario} seed {seed}: {:?}", run.report.failure),
            )?;
        }
        line.push(format!("{scenario} 5/5"));
    }
    let run = run_scenario(Scenario::Image, &Config::default()).map_err(|e| e.to_string())?;
    let rate = |k: &str| run.report.details[k].as_f64().unwrap_or(0.0);
    let (n, r) = (rate("neighbour_exact_rate"), rate("random_exact_rate"));
    check((run.report.metrics.coverage - 0.71).abs() < 0.001, "image coverage not forced to 71%")?;
    check(n > r, format!("image: neighbour {n:.3} vs random {r:.3}"))?;
    line.push(format!("image neighbour {n:.3} > random {r:.3}"));
    Ok(line.join(", "))
}

fn determinism() -> Verdict {
    let jobs = [
        (Job::Attack { scenario: "aes-128".into() }, 100),
        (Job::Attack { scenario: "kaslr".into() }, 40),
        (Job::Attack { scenario: "image".into() }, 1),
        (Job::Sweep { kind: SweepKind::EvictionSize }, 16),
        (Job::DumpPage { victim: "rsa-512".into() }, 20),
    ];
    let mut files = 0;
    for (job, iterations) in jobs {
        let cfg = Config {
            seed: 42,
            iterations: Some(iterations),
            ..Config::default()
        };
        let a = execute(&job, &cfg).map_err(|e| e.to_string())?;
        let b = execute(&job, &cfg).map_err(|e| e.to_string())?;
        check(a.files == b.files, format!("{job:?}: outputs differ"))?;
        files += a.files.len();
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = Config {
        seed: 42,
        iterations: Some(30),
        out: dir.path().to_owned(),
        ..Config::default()
    };
    let (_, run_dir) = execute_and_write(&Job::Attack { scenario: "canary".into() }, &cfg).map_err(|e| e.to_string())?;
    let checks = replay(&run_dir).map_err(|e| e.to_string())?;
    check(checks.iter().all(|c| c.identical), "replay differs")?;
    Ok(format!("{files} output files byte-identical across runs, replay identical"))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("eviction-set size step", eviction_size_step),
        ("set selection diagonal", set_diagonal),
        ("offset selection", offset_selection),
        ("leakage source triad", triad),
        ("transactional isolation", transactional_isolation),
        ("rsa reconstruction", rsa_reconstruction),
        ("aes key location", aes_location),
        ("stitching", stitching),
        ("weight filter", weight_filtering),
        ("end-to-end scenarios", end_to_end),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(msg) => println!("PASS {:>2} {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {msg}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
