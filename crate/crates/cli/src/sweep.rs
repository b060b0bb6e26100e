//! Parameter sweeps over the write-leak flow, written out as heatmaps.

use std::fmt;
use std::io;
use std::str::FromStr;
use std::time::Instant;

use lfbleak::addr::{Addr, LINE_SIZE, NUM_SETS};
use lfbleak::attack::{attack_write, AttackOptions, LeakHistogram, Session, DUMP_OFFSETS};
use lfbleak::victims::VictimProgram;
use lfbleak::Domain;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::report::{ExperimentReport, Metrics, Outcome};
use crate::scenarios::{domain_kind_label, machine_for, HarnessError};

/// Page the sweep victims write to.
pub const SWEEP_PAGE: u64 = 0x7000_0000;
pub const SWEEP_VICTIM: Domain = Domain::process(2);
/// Set used when the sweep does not vary the set.
pub const SWEEP_SET: usize = 5;
pub const PAIR_MARKER: (u8, u8) = (0xde, 0xad);
pub const BYTE_MARKER: u8 = 0xa5;
pub const DEFAULT_SWEEP_ITERATIONS: usize = 16;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    /// x: eviction-set size.
    EvictionSize,
    /// y: set the victim writes to, x: set the attacker evicts and samples.
    SetMatrix,
    /// y: offset of the victim's marker byte, x: sampled offset.
    OffsetMatrix,
}

impl FromStr for SweepKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "eviction-size" => Ok(SweepKind::EvictionSize),
            "set-matrix" => Ok(SweepKind::SetMatrix),
            "offset-matrix" => Ok(SweepKind::OffsetMatrix),
            _ => Err(HarnessError::Usage(format!("unknown sweep `{s}`"))),
        }
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepKind::EvictionSize => "eviction-size",
            SweepKind::SetMatrix => "set-matrix",
            SweepKind::OffsetMatrix => "offset-matrix",
        })
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatCell {
    pub x: usize,
    pub y: usize,
    pub correct: u64,
    pub incorrect: u64,
    pub correct_rate: f64,
}

impl HeatCell {
    pub fn new(x: usize, y: usize, correct: u64, incorrect: u64) -> Self {
        let total = correct + incorrect;
        Self {
            x,
            y,
            correct,
            incorrect,
            correct_rate: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        }
    }
}

pub fn write_heatmap<W: io::Write>(cells: &[HeatCell], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for c in cells {
        out.serialize(c)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_heatmap<R: io::Read>(r: R) -> csv::Result<Vec<HeatCell>> {
    csv::Reader::from_reader(r).deserialize().collect()
}

#[derive(Clone, Debug)]
pub struct SweepRun {
    pub report: ExperimentReport,
    pub cells: Vec<HeatCell>,
}

fn split(hist: &LeakHistogram, set: usize, offset: usize, good: impl Fn((u8, u8)) -> bool) -> (u64, u64) {
    hist.cell(set, offset).fold((0, 0), |(c, i), (pair, n)| {
        if good(pair) {
            (c + n, i)
        } else {
            (c, i + n)
        }
    })
}

/// For each row, whether the diagonal cell has the most correct samples.
pub fn diagonal_rows(cells: &[HeatCell]) -> Vec<bool> {
    let rows = cells.iter().map(|c| c.y).max().map_or(0, |m| m + 1);
    (0..rows)
        .map(|y| {
            let row: Vec<&HeatCell> = cells.iter().filter(|c| c.y == y).collect();
            let best = row.iter().map(|c| c.correct).max().unwrap_or(0);
            let diag = row.iter().find(|c| c.x == y).map_or(0, |c| c.correct);
            best > 0 && diag == best && row.iter().filter(|c| c.correct == best).count() == 1
        })
        .collect()
}

fn session(cfg: &Config, victim: VictimProgram, index: u64) -> Result<Session, SweepFailure> {
    let m = machine_for(cfg, victim.domain, index).map_err(|e| SweepFailure::Harness(e.into()))?;
    Session::new(m, victim, cfg.sweep.mode).map_err(|e| SweepFailure::Online(e.to_string()))
}

enum SweepFailure {
    Harness(HarnessError),
    Online(String),
}

fn cells_for(kind: SweepKind, cfg: &Config, iterations: usize) -> Result<Vec<HeatCell>, SweepFailure> {
    let online = |e: lfbleak::attack::AttackError| SweepFailure::Online(e.to_string());
    let mut cells = Vec::new();
    match kind {
        SweepKind::EvictionSize => {
            let line = Addr::from_parts(SWEEP_PAGE, SWEEP_SET, 0);
            let victim = VictimProgram::writer(SWEEP_VICTIM, line, &[PAIR_MARKER.0, PAIR_MARKER.1]);
            for &size in &cfg.sweep.sizes {
                let mut s = session(cfg, victim.clone(), size as u64)?;
                let opts = AttackOptions {
                    evset_size: size,
                    ..cfg.attack
                };
                let h = attack_write(&mut s, SWEEP_SET, 0, iterations, &opts).map_err(online)?;
                let (c, i) = split(&h, SWEEP_SET, 0, |p| p == PAIR_MARKER);
                cells.push(HeatCell::new(size, 0, c, i));
            }
        }
        SweepKind::SetMatrix => {
            for y in 0..NUM_SETS {
                let line = Addr::from_parts(SWEEP_PAGE, y, 0);
                let victim = VictimProgram::writer(SWEEP_VICTIM, line, &[PAIR_MARKER.0, PAIR_MARKER.1]);
                let mut s = session(cfg, victim, y as u64)?;
                for x in 0..NUM_SETS {
                    let h = attack_write(&mut s, x, 0, iterations, &cfg.attack).map_err(online)?;
                    let (c, i) = split(&h, x, 0, |p| p == PAIR_MARKER);
                    cells.push(HeatCell::new(x, y, c, i));
                }
            }
        }
        SweepKind::OffsetMatrix => {
            for y in 0..LINE_SIZE {
                let mut data = [0u8; LINE_SIZE];
                data[y] = BYTE_MARKER;
                let line = Addr::from_parts(SWEEP_PAGE, SWEEP_SET, 0);
                let mut s = session(cfg, VictimProgram::line_writer(SWEEP_VICTIM, line, data), y as u64)?;
                for x in 0..DUMP_OFFSETS {
                    let h = attack_write(&mut s, SWEEP_SET, x, iterations, &cfg.attack).map_err(online)?;
                    // Correct: the marker shows up exactly where it sits
                    // relative to the sampled offset.
                    let (c, i) = split(&h, SWEEP_SET, x, |p| {
                        (x == y || x + 1 == y) && p == (data[x], data[x + 1])
                    });
                    cells.push(HeatCell::new(x, y, c, i));
                }
            }
        }
    }
    Ok(cells)
}

pub fn run_sweep(kind: SweepKind, cfg: &Config) -> Result<SweepRun, HarnessError> {
    cfg.validate().map_err(|e| HarnessError::Usage(e.to_string()))?;
    let started = Instant::now();
    let iterations = cfg.iterations.unwrap_or(DEFAULT_SWEEP_ITERATIONS);
    let mut report = ExperimentReport {
        scenario: format!("sweep-{kind}"),
        seed: cfg.seed,
        iterations,
        victim_domain: domain_kind_label(SWEEP_VICTIM.kind),
        noise: cfg.noise,
        mitigations: cfg.mitigations,
        outcome: Outcome::Verified,
        failure: None,
        metrics: Metrics::default(),
        details: Default::default(),
        wall_time_ms: None,
    };
    report.detail("mode", cfg.sweep.mode);
    let cells = match cells_for(kind, cfg, iterations) {
        Ok(c) => c,
        Err(SweepFailure::Harness(e)) => return Err(e),
        Err(SweepFailure::Online(why)) => {
            report.outcome = Outcome::OnlineFailure;
            report.failure = Some(why);
            Vec::new()
        }
    };
    let total: u64 = cells.iter().map(|c| c.correct + c.incorrect).sum();
    let correct: u64 = cells.iter().map(|c| c.correct).sum();
    report.metrics.modal_correct_rate = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
    if matches!(kind, SweepKind::SetMatrix | SweepKind::OffsetMatrix) && !cells.is_empty() {
        let rows = diagonal_rows(&cells);
        let diag = rows.iter().filter(|r| **r).count();
        report.detail("diagonal_rows", diag);
        report.metrics.accuracy = diag as f64 / rows.len() as f64;
    }
    if cfg.record_time {
        report.wall_time_ms = Some(started.elapsed().as_millis() as u64);
    }
    Ok(SweepRun { report, cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use lfbleak::NoiseConfig;

    fn quiet() -> Config {
        Config {
            noise: NoiseConfig::off(),
            iterations: Some(2),
            ..Config::default()
        }
    }

    #[test]
    fn heatmap_csv_round_trips() {
        let cells = vec![HeatCell::new(1, 2, 3, 1), HeatCell::new(0, 0, 0, 0)];
        let mut buf = Vec::new();
        write_heatmap(&cells, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("x,y,correct,incorrect,correct_rate\n"));
        assert_eq!(read_heatmap(&buf[..]).unwrap(), cells);
    }

    #[test]
    fn eviction_size_steps_at_associativity() {
        let run = run_sweep(SweepKind::EvictionSize, &quiet()).unwrap();
        for c in &run.cells {
            assert_eq!(c.correct > 0, c.x >= 8, "size {}", c.x);
        }
    }

    #[test]
    fn diagonal_detection() {
        let cells = vec![
            HeatCell::new(0, 0, 5, 0),
            HeatCell::new(1, 0, 1, 4),
            HeatCell::new(0, 1, 3, 0),
            HeatCell::new(1, 1, 3, 0),
        ];
        assert_eq!(diagonal_rows(&cells), vec![true, false]);
    }
}
