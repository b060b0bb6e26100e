use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lfbleak::{DomainKind, NoiseConfig};

use crate::config::Config;
use crate::jobs::{execute_and_write, replay, Job};
use crate::report::exit;
use crate::scenarios::HarnessError;

#[derive(Debug, Parser)]
#[command(name = "lfbleak", version, about = "Simulated cache-eviction leakage through the line fill buffer")]
pub struct Cli {
    #[command(flatten)]
    pub flags: Flags,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Default, Args)]
pub struct Flags {
    /// Master seed; every random choice derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `off`, `default`, or `SUCCESS,SPURIOUS,ZERO_FF` probabilities.
    #[arg(long, global = true, value_parser = parse_noise)]
    pub noise: Option<NoiseConfig>,
    /// Enable a mitigation. Repeatable.
    #[arg(long = "mitigation", global = true, value_enum)]
    pub mitigations: Vec<Mitigation>,
    /// Samples per (set, offset) cell.
    #[arg(long, global = true)]
    pub iterations: Option<usize>,
    /// Output root.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML file; its values override the flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Security domain of the victim.
    #[arg(long, global = true, value_parser = parse_domain)]
    pub victim_domain: Option<DomainKind>,
    /// Include wall-clock time in reports.
    #[arg(long, global = true)]
    pub record_time: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mitigation {
    /// Overwrite the fill buffer on every context switch.
    Verw,
    /// Flush the L1-D on every context switch.
    #[value(name = "l1dflush")]
    L1dFlush,
    /// Disable transactional execution.
    TsxOff,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Heatmap sweep: eviction-size, set-matrix or offset-matrix.
    Sweep { kind: String },
    /// End-to-end attack: aes[-128|-192|-256], rsa[-512|-1024|-2048|-4096],
    /// fann, image, kaslr or canary.
    Attack { scenario: String },
    /// Dump one victim page: aes-N, rsa-N, fann, kernel or enclave.
    DumpPage { victim: String },
    /// Re-run a stored run directory and compare its outputs.
    Replay { dir: PathBuf },
}

fn parse_noise(s: &str) -> Result<NoiseConfig, String> {
    let n = match s {
        "off" => NoiseConfig::off(),
        "default" => NoiseConfig::default(),
        _ => {
            let v: Vec<f64> = s
                .split(',')
                .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p}: {e}")))
                .collect::<Result<_, _>>()?;
            let [taa_success_prob, spurious_entry_prob, zero_ff_inflation] = v[..] else {
                return Err("expected off, default or three comma-separated probabilities".into());
            };
            NoiseConfig {
                taa_success_prob,
                spurious_entry_prob,
                zero_ff_inflation,
            }
        }
    };
    n.validate().map_err(|e| e.to_string())?;
    Ok(n)
}

fn parse_domain(s: &str) -> Result<DomainKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| "expected process, kernel, vm-guest, hypervisor or enclave".to_string())
}

impl Flags {
    /// Flags applied to the defaults, then the config file on top.
    pub fn resolve(&self) -> Result<Config, HarnessError> {
        let mut c = Config::default();
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(n) = self.noise {
            c.noise = n;
        }
        for m in &self.mitigations {
            match m {
                Mitigation::Verw => c.mitigations.verw_on_switch = true,
                Mitigation::L1dFlush => c.mitigations.l1d_flush_on_switch = true,
                Mitigation::TsxOff => c.mitigations.tsx_disabled = true,
            }
        }
        if self.iterations.is_some() {
            c.iterations = self.iterations;
        }
        if let Some(o) = &self.out {
            c.out = o.clone();
        }
        if self.victim_domain.is_some() {
            c.scenario.victim_domain = self.victim_domain;
        }
        c.record_time |= self.record_time;
        if let Some(path) = &self.config {
            c = c.overridden_by_file(path).map_err(|e| HarnessError::Usage(e.to_string()))?;
        }
        c.validate().map_err(|e| HarnessError::Usage(e.to_string()))?;
        Ok(c)
    }
}

/// Parse arguments, run the command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(HarnessError::Usage(msg)) => {
            eprintln!("error: {msg}");
            exit::USAGE
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit::INTERNAL
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32, HarnessError> {
    let job = match &cli.command {
        Command::Replay { dir } => {
            let checks = replay(dir)?;
            let mut all = true;
            for c in &checks {
                println!("{} {}", if c.identical { "identical" } else { "DIFFERENT" }, c.file);
                all &= c.identical;
            }
            return Ok(if all { exit::VERIFIED } else { exit::REPLAY_MISMATCH });
        }
        Command::Sweep { kind } => Job::Sweep { kind: kind.parse()? },
        Command::Attack { scenario } => Job::Attack {
            scenario: scenario.clone(),
        },
        Command::DumpPage { victim } => Job::DumpPage { victim: victim.clone() },
    };
    let cfg = cli.flags.resolve()?;
    let (output, dir) = execute_and_write(&job, &cfg)?;
    let r = &output.report;
    let outcome = serde_json::to_value(r.outcome).unwrap_or_default();
    println!(
        "{} seed {}: {} (coverage {:.3}, accuracy {:.3}, modal {:.3})",
        r.scenario,
        r.seed,
        outcome.as_str().unwrap_or("?"),
        r.metrics.coverage,
        r.metrics.accuracy,
        r.metrics.modal_correct_rate
    );
    if let Some(f) = &r.failure {
        println!("  {f}");
    }
    println!("  {}", dir.display());
    Ok(r.outcome.exit_code())
}
