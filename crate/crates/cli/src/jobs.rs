//! A job is one CLI invocation that produces a run directory:
//! `<out>/<name>/<seed>/` holding `run.toml` (enough to replay it),
//! `report.json` and the data files.

use std::fs;
use std::path::{Path, PathBuf};

use lfbleak::addr::PAGE_SIZE;
use lfbleak::attack::{dump_page, stitch, Access, LeakHistogram, PageDump, Session, ThreadMode};
use lfbleak::crypto::aes::KeySize;
use lfbleak::victims::{
    victim_aes, victim_enclave, victim_fann, victim_kernel, victim_rsa, VictimProgram, AES_PAGE, ENCLAVE_BASE,
    FANN_PAGE, FANN_WEIGHTS, KERNEL_PAGE, RSA_PAGE,
};
use lfbleak::{Domain, DomainKind};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::report::{ExperimentReport, Metrics, Outcome};
use crate::scenarios::{
    architectural_page, domain_kind_label, machine_for, run_scenario, synthetic_image, HarnessError, Scenario,
    AES_MESSAGE,
};
use crate::seeds::{self, stream};
use crate::sweep::{run_sweep, write_heatmap, SweepKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Job {
    Sweep { kind: SweepKind },
    Attack { scenario: String },
    DumpPage { victim: String },
}

/// What gets stored next to the outputs so the run can be repeated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub job: Job,
    pub config: Config,
}

#[derive(Clone, Debug)]
pub struct JobOutput {
    pub name: String,
    pub report: ExperimentReport,
    /// File name and contents, in write order. Always starts with
    /// `report.json`.
    pub files: Vec<(String, Vec<u8>)>,
}

impl JobOutput {
    pub fn dir(&self, out: &Path) -> PathBuf {
        out.join(&self.name).join(self.report.seed.to_string())
    }
}

fn csv_bytes(h: &LeakHistogram) -> Result<Vec<u8>, HarnessError> {
    let mut buf = Vec::new();
    h.write_csv(&mut buf).map_err(|e| HarnessError::Internal(e.to_string()))?;
    Ok(buf)
}

/// `histograms.csv` holds every sample of the job. Jobs that dump several
/// pages or runs also get one file per part.
fn histogram_files(parts: &[LeakHistogram]) -> Result<Vec<(String, Vec<u8>)>, HarnessError> {
    let mut all = LeakHistogram::new();
    for h in parts {
        all.merge(h);
    }
    let mut files = vec![("histograms.csv".to_string(), csv_bytes(&all)?)];
    if parts.len() > 1 {
        for (i, h) in parts.iter().enumerate() {
            files.push((format!("histograms-{i:02}.csv"), csv_bytes(h)?));
        }
    }
    Ok(files)
}

pub fn execute(job: &Job, cfg: &Config) -> Result<JobOutput, HarnessError> {
    let (name, report, mut files) = match job {
        Job::Attack { scenario } => {
            let scenario = Scenario::parse(scenario, cfg)?;
            let run = run_scenario(scenario, cfg)?;
            let mut files = histogram_files(&run.histograms)?;
            files.extend(run.artifacts);
            (scenario.to_string(), run.report, files)
        }
        Job::Sweep { kind } => {
            let run = run_sweep(*kind, cfg)?;
            let mut buf = Vec::new();
            write_heatmap(&run.cells, &mut buf).map_err(|e| HarnessError::Internal(e.to_string()))?;
            (format!("sweep-{kind}"), run.report, vec![("heatmap.csv".to_string(), buf)])
        }
        Job::DumpPage { victim } => {
            let (report, hist, page) = dump_victim_page(victim, cfg)?;
            let mut files = histogram_files(std::slice::from_ref(&hist))?;
            files.push(("page.txt".into(), page.into_bytes()));
            (format!("dump-{victim}"), report, files)
        }
    };
    files.insert(0, ("report.json".to_string(), report.to_json().into_bytes()));
    Ok(JobOutput { name, report, files })
}

/// Run a job and write its directory. Returns the directory.
pub fn execute_and_write(job: &Job, cfg: &Config) -> Result<(JobOutput, PathBuf), HarnessError> {
    let output = execute(job, cfg)?;
    let dir = output.dir(&cfg.out);
    let io = |e: std::io::Error| HarnessError::Internal(format!("writing {}: {e}", dir.display()));
    fs::create_dir_all(&dir).map_err(io)?;
    let record = RunRecord {
        job: job.clone(),
        config: cfg.clone(),
    };
    let toml = toml::to_string(&record).map_err(|e| HarnessError::Internal(e.to_string()))?;
    fs::write(dir.join("run.toml"), toml).map_err(io)?;
    for (name, bytes) in &output.files {
        fs::write(dir.join(name), bytes).map_err(io)?;
    }
    Ok((output, dir))
}

/// Per-file result of a replay.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplayCheck {
    pub file: String,
    pub identical: bool,
}

/// Re-run the job stored in `dir` and compare every output with the file
/// on disk. Report timings are ignored.
pub fn replay(dir: &Path) -> Result<Vec<ReplayCheck>, HarnessError> {
    let path = dir.join("run.toml");
    let text = fs::read_to_string(&path).map_err(|e| HarnessError::Usage(format!("reading {}: {e}", path.display())))?;
    let record: RunRecord =
        toml::from_str(&text).map_err(|e| HarnessError::Usage(format!("parsing {}: {e}", path.display())))?;
    let output = execute(&record.job, &record.config)?;
    let mut checks = Vec::new();
    for (name, bytes) in &output.files {
        let stored = fs::read(dir.join(name)).ok();
        let identical = match (name.as_str(), stored) {
            (_, None) => false,
            ("report.json", Some(s)) => untimed(&s).is_some() && untimed(&s) == untimed(bytes),
            (_, Some(s)) => &s == bytes,
        };
        checks.push(ReplayCheck {
            file: name.clone(),
            identical,
        });
    }
    Ok(checks)
}

/// Report JSON with the timing field removed.
fn untimed(json: &[u8]) -> Option<serde_json::Value> {
    let mut v: serde_json::Value = serde_json::from_slice(json).ok()?;
    v.as_object_mut()?.remove("wall_time_ms");
    Some(v)
}

/// Victims `dump-page` knows, with how they are attacked.
fn dump_target(victim: &str, cfg: &Config) -> Result<(VictimProgram, u64, ThreadMode, Access), HarnessError> {
    let kind = |default| cfg.scenario.victim_domain.unwrap_or(default);
    let mut secret = seeds::rng(cfg.seed, stream::SECRET, 0);
    let usage = |e: String| HarnessError::Usage(e);
    if let Some(bits) = victim.strip_prefix("aes-") {
        let size = bits
            .parse()
            .ok()
            .and_then(KeySize::from_bits)
            .ok_or_else(|| usage(format!("unsupported AES key size {bits}")))?;
        let (v, _) = victim_aes(size, &AES_MESSAGE, Domain::new(kind(DomainKind::Process), 2), &mut secret);
        return Ok((v, AES_PAGE, ThreadMode::SameThread, Access::Write));
    }
    if let Some(bits) = victim.strip_prefix("rsa-") {
        let bits: usize = bits.parse().map_err(|_| usage(format!("bad RSA size {bits}")))?;
        let (v, _) = victim_rsa(bits, Domain::new(kind(DomainKind::Process), 2), &mut secret)
            .map_err(|e| usage(e.to_string()))?;
        return Ok((v, RSA_PAGE, ThreadMode::CrossThread, Access::Read));
    }
    match victim {
        "fann" => {
            let weights: Vec<f32> = (0..FANN_WEIGHTS).map(|_| secret.gen_range(-4.0..4.0)).collect();
            let (v, _) = victim_fann(&weights, cfg.scenario.weight_offset, Domain::new(kind(DomainKind::Process), 2))
                .map_err(|e| usage(e.to_string()))?;
            Ok((v, FANN_PAGE, ThreadMode::CrossThread, Access::Read))
        }
        "kernel" => {
            let k = kind(DomainKind::Kernel);
            if !matches!(k, DomainKind::Kernel | DomainKind::VmGuest | DomainKind::Hypervisor) {
                return Err(usage(format!("victim domain {} cannot run the kernel victim", domain_kind_label(k))));
            }
            let (v, _) = victim_kernel(seeds::derive(cfg.seed, stream::BOOT, 0), Domain::new(k, 0));
            Ok((v, KERNEL_PAGE, ThreadMode::SameThread, Access::Write))
        }
        "enclave" => {
            let img = synthetic_image(64, 22, &mut secret);
            let mut page = img.to_rgb();
            page.resize(PAGE_SIZE, 0);
            let v = victim_enclave(&page, Domain::new(kind(DomainKind::Enclave), 1));
            Ok((v, ENCLAVE_BASE, ThreadMode::SameThread, Access::Write))
        }
        _ => Err(usage(format!("unknown victim `{victim}`"))),
    }
}

pub const DEFAULT_DUMP_ITERATIONS: usize = 100;

/// Dump the victim's page and score it against what the page holds.
fn dump_victim_page(victim: &str, cfg: &Config) -> Result<(ExperimentReport, LeakHistogram, String), HarnessError> {
    cfg.validate().map_err(|e| HarnessError::Usage(e.to_string()))?;
    let (program, base, mode, access) = dump_target(victim, cfg)?;
    let iterations = cfg.iterations.unwrap_or(DEFAULT_DUMP_ITERATIONS);
    let mut report = ExperimentReport {
        scenario: format!("dump-{victim}"),
        seed: cfg.seed,
        iterations,
        victim_domain: domain_kind_label(program.domain.kind),
        noise: cfg.noise,
        mitigations: cfg.mitigations,
        outcome: Outcome::Verified,
        failure: None,
        metrics: Metrics::default(),
        details: Default::default(),
        wall_time_ms: None,
    };
    let started = std::time::Instant::now();
    let machine = machine_for(cfg, program.domain, 0)?;
    let result = Session::new(machine, program, mode)
        .and_then(|mut s| dump_page(&mut s, access, iterations, &cfg.attack).map(|(d, h)| (d, h, s)));
    let (dump, hist) = match result {
        Ok((dump, hist, session)) => {
            let truth = architectural_page(session.machine(), base);
            let recovered: Vec<usize> = (0..PAGE_SIZE).filter(|i| dump.bytes()[*i].is_some()).collect();
            let right = recovered.iter().filter(|i| dump.bytes()[**i] == Some(truth[**i])).count();
            report.metrics.coverage = dump.coverage();
            report.metrics.accuracy = if recovered.is_empty() { 0.0 } else { right as f64 / recovered.len() as f64 };
            let known: Vec<(usize, u8)> = truth.iter().copied().enumerate().collect();
            report.metrics.modal_correct_rate = crate::scenarios::secret_metrics(&dump, &hist, &known).1;
            let agreeing = stitch(&hist.samples()).agree.iter().filter(|a| **a).count();
            report.detail("stitch_agreeing_bytes", agreeing);
            if dump.coverage() == 0.0 {
                report.outcome = Outcome::OnlineFailure;
                report.failure = Some("no bytes leaked".into());
            }
            (dump, hist)
        }
        Err(e) => {
            report.outcome = Outcome::OnlineFailure;
            report.failure = Some(e.to_string());
            let h = LeakHistogram::new();
            (PageDump::from_histogram(&h), h)
        }
    };
    if cfg.record_time {
        report.wall_time_ms = Some(started.elapsed().as_millis() as u64);
    }
    Ok((report, hist, hexdump(dump.bytes())))
}

/// Sixteen bytes per row, `??` where nothing was recovered.
pub fn hexdump(bytes: &[Option<u8>]) -> String {
    let mut s = String::new();
    for (row, chunk) in bytes.chunks(16).enumerate() {
        s.push_str(&format!("{:04x}:", row * 16));
        for b in chunk {
            match b {
                Some(v) => s.push_str(&format!(" {v:02x}")),
                None => s.push_str(" ??"),
            }
        }
        s.push('\n');
    }
    s
}
