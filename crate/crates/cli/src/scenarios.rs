//! End-to-end experiments: build a victim, run the online attack against
//! it on a fresh machine, reconstruct the secret offline and check the
//! result against the victim's ground truth.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use lfbleak::addr::{Addr, LINE_SIZE, PAGE_SIZE};
use lfbleak::attack::{dump_page, Access, AttackError, LeakHistogram, PageDump, Session, ThreadMode};
use lfbleak::crypto::aes::KeySize;
use lfbleak::recon::image::random_choice;
use lfbleak::recon::kaslr::{classify_across_reboot, find_static_slots};
use lfbleak::recon::weights::{naive_modal, top_k_accuracy};
use lfbleak::recon::{
    aes_locate, image_reconstruct, rsa_reconstruct, weight_filter, ChunkPool, Image, PixelCandidate, SlotCriterion,
    StaticSearch, WeightFilter,
};
use lfbleak::victims::{
    victim_aes, victim_enclave, victim_fann, victim_kernel, victim_rsa, VictimProgram, FANN_WEIGHTS, KASLR_ALIGN,
    KASLR_SLOTS, KERNEL_TEXT_BASE, HRTICK_OFFSET,
};
use lfbleak::{Domain, DomainKind, MachineState, SimError};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::report::{ExperimentReport, Metrics, Outcome};
use crate::seeds::{self, stream};

/// Block the AES victim decrypts on every step.
pub const AES_MESSAGE: [u8; 16] = *b"attack at dawn!!";

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Aes { bits: usize },
    Rsa { bits: usize },
    Fann,
    Image,
    Kaslr,
    Canary,
}

impl Scenario {
    /// Parse a scenario name. `aes` and `rsa` without a size take it from
    /// the configuration.
    pub fn parse(name: &str, cfg: &Config) -> Result<Self, HarnessError> {
        let sized = |prefix: &str| -> Option<Option<usize>> {
            let rest = name.strip_prefix(prefix)?;
            if rest.is_empty() {
                return Some(None);
            }
            rest.strip_prefix('-')?.parse().ok().map(Some)
        };
        let s = if let Some(bits) = sized("aes") {
            let bits = bits.unwrap_or(cfg.scenario.aes_key_bits);
            KeySize::from_bits(bits).ok_or_else(|| HarnessError::Usage(format!("unsupported AES key size {bits}")))?;
            Scenario::Aes { bits }
        } else if let Some(bits) = sized("rsa") {
            let bits = bits.unwrap_or(cfg.scenario.rsa_bits);
            if ![512, 1024, 2048, 4096].contains(&bits) {
                return Err(HarnessError::Usage(format!("unsupported RSA size {bits}")));
            }
            Scenario::Rsa { bits }
        } else {
            match name {
                "fann" => Scenario::Fann,
                "image" => Scenario::Image,
                "kaslr" => Scenario::Kaslr,
                "canary" => Scenario::Canary,
                _ => return Err(HarnessError::Usage(format!("unknown scenario `{name}`"))),
            }
        };
        Ok(s)
    }

    pub fn default_iterations(self) -> usize {
        match self {
            Scenario::Aes { .. } => 500,
            Scenario::Rsa { .. } => 100,
            Scenario::Fann => 32,
            Scenario::Image => 2,
            Scenario::Kaslr | Scenario::Canary => 100,
        }
    }

    fn default_domain(self) -> DomainKind {
        match self {
            Scenario::Aes { .. } | Scenario::Rsa { .. } | Scenario::Fann => DomainKind::Process,
            Scenario::Image => DomainKind::Enclave,
            Scenario::Kaslr | Scenario::Canary => DomainKind::Kernel,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::Aes { bits } => write!(f, "aes-{bits}"),
            Scenario::Rsa { bits } => write!(f, "rsa-{bits}"),
            Scenario::Fann => f.write_str("fann"),
            Scenario::Image => f.write_str("image"),
            Scenario::Kaslr => f.write_str("kaslr"),
            Scenario::Canary => f.write_str("canary"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<SimError> for HarnessError {
    fn from(e: SimError) -> Self {
        HarnessError::Internal(e.to_string())
    }
}

/// Everything one experiment produced.
#[derive(Clone, Debug)]
pub struct ScenarioRun {
    pub report: ExperimentReport,
    /// One histogram per dumped page or victim run.
    pub histograms: Vec<LeakHistogram>,
    /// Extra output files: name and contents.
    pub artifacts: Vec<(String, Vec<u8>)>,
}

pub fn domain_kind_label(kind: DomainKind) -> String {
    serde_json::to_value(kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

impl FromStr for Scenario {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::parse(s, &Config::default())
    }
}

/// A fresh machine for run `index` of an experiment. Victims inside a VM
/// or the hypervisor see a noisier channel.
pub fn machine_for(cfg: &Config, domain: Domain, index: u64) -> Result<MachineState, SimError> {
    let mut noise = cfg.noise;
    if matches!(domain.kind, DomainKind::VmGuest | DomainKind::Hypervisor) {
        noise = noise.with_extra_noise(cfg.scenario.vm_noise_increment);
    }
    Ok(MachineState::new(seeds::derive(cfg.seed, stream::MACHINE, index), noise)?.with_mitigations(cfg.mitigations))
}

struct Runner<'a> {
    cfg: &'a Config,
    report: ExperimentReport,
    histograms: Vec<LeakHistogram>,
    artifacts: Vec<(String, Vec<u8>)>,
}

/// Online phase stopped early; the report says why.
struct Online(String);

impl From<AttackError> for Online {
    fn from(e: AttackError) -> Self {
        Online(e.to_string())
    }
}

impl<'a> Runner<'a> {
    fn dump(
        &mut self,
        victim: VictimProgram,
        mode: ThreadMode,
        access: Access,
        index: u64,
    ) -> Result<Result<(PageDump, Session), Online>, HarnessError> {
        let domain = victim.domain;
        let machine = machine_for(self.cfg, domain, index)?;
        let mut session = match Session::new(machine, victim, mode) {
            Ok(s) => s,
            Err(e) => return Ok(Err(e.into())),
        };
        let iterations = self.report.iterations;
        match dump_page(&mut session, access, iterations, &self.cfg.attack) {
            Ok((dump, hist)) => {
                self.histograms.push(hist);
                if dump.coverage() == 0.0 {
                    return Ok(Err(Online("no bytes leaked".into())));
                }
                Ok(Ok((dump, session)))
            }
            Err(e) => Ok(Err(e.into())),
        }
    }
}

/// Run one experiment. Usage errors (bad sizes, incompatible domains) are
/// returned as errors; attack failures are recorded in the report.
pub fn run_scenario(scenario: Scenario, cfg: &Config) -> Result<ScenarioRun, HarnessError> {
    cfg.validate().map_err(|e| HarnessError::Usage(e.to_string()))?;
    let started = Instant::now();
    let kind = cfg.scenario.victim_domain.unwrap_or(scenario.default_domain());
    let iterations = cfg.iterations.unwrap_or(scenario.default_iterations());
    let mut runner = Runner {
        cfg,
        report: ExperimentReport {
            scenario: scenario.to_string(),
            seed: cfg.seed,
            iterations,
            victim_domain: domain_kind_label(kind),
            noise: cfg.noise,
            mitigations: cfg.mitigations,
            outcome: Outcome::OfflineFailure,
            failure: None,
            metrics: Metrics::default(),
            details: Default::default(),
            wall_time_ms: None,
        },
        histograms: Vec::new(),
        artifacts: Vec::new(),
    };
    let result = match scenario {
        Scenario::Aes { bits } => run_aes(&mut runner, bits, kind),
        Scenario::Rsa { bits } => run_rsa(&mut runner, bits, kind),
        Scenario::Fann => run_fann(&mut runner, kind),
        Scenario::Image => run_image(&mut runner, kind),
        Scenario::Kaslr => run_kernel(&mut runner, kind, false),
        Scenario::Canary => run_kernel(&mut runner, kind, true),
    }?;
    let mut report = runner.report;
    match result {
        Ok(Ok(())) => report.outcome = Outcome::Verified,
        Ok(Err(why)) => {
            report.outcome = Outcome::OfflineFailure;
            report.failure = Some(why);
        }
        Err(Online(why)) => {
            report.outcome = Outcome::OnlineFailure;
            report.failure = Some(why);
        }
    }
    if cfg.record_time {
        report.wall_time_ms = Some(started.elapsed().as_millis() as u64);
    }
    Ok(ScenarioRun {
        report,
        histograms: runner.histograms,
        artifacts: runner.artifacts,
    })
}

/// Outer error: harness problem. Middle: online failure. Inner: offline
/// verdict.
type Verdict = Result<Result<Result<(), String>, Online>, HarnessError>;

macro_rules! online {
    ($e:expr) => {
        match $e? {
            Ok(v) => v,
            Err(o) => return Ok(Err(o)),
        }
    };
}

/// Byte accuracy and modal-pair rate over the bytes whose value is known.
pub fn secret_metrics(dump: &PageDump, hist: &LeakHistogram, known: &[(usize, u8)]) -> (f64, f64) {
    if known.is_empty() {
        return (0.0, 0.0);
    }
    let map: std::collections::BTreeMap<usize, u8> = known.iter().copied().collect();
    let correct = known.iter().filter(|(i, b)| dump.bytes()[*i] == Some(*b)).count();
    let (mut sampled, mut right) = (0usize, 0usize);
    for (&i, &b0) in &map {
        let Some(&b1) = map.get(&(i + 1)) else { continue };
        if i % LINE_SIZE == LINE_SIZE - 1 {
            continue;
        }
        if let Some((pair, _)) = hist.modal(i / LINE_SIZE, i % LINE_SIZE) {
            sampled += 1;
            right += (pair == (b0, b1)) as usize;
        }
    }
    let modal = if sampled == 0 { 0.0 } else { right as f64 / sampled as f64 };
    (correct as f64 / known.len() as f64, modal)
}

fn run_aes(r: &mut Runner, bits: usize, kind: DomainKind) -> Verdict {
    let size = KeySize::from_bits(bits).ok_or_else(|| HarnessError::Usage(format!("unsupported AES key size {bits}")))?;
    let mut secret = seeds::rng(r.cfg.seed, stream::SECRET, 0);
    let (victim, truth) = victim_aes(size, &AES_MESSAGE, Domain::new(kind, 2), &mut secret);
    let (dump, _) = online!(r.dump(victim, ThreadMode::SameThread, Access::Write, 0));

    let mut image = truth.plaintext.clone();
    image.extend_from_slice(&truth.schedule);
    let known: Vec<(usize, u8)> = image.iter().copied().enumerate().collect();
    let (accuracy, modal) = secret_metrics(&dump, r.histograms.last().unwrap(), &known);
    r.report.metrics = Metrics {
        coverage: dump.coverage(),
        accuracy,
        modal_correct_rate: modal,
    };

    let candidates = aes_locate(dump.bytes(), size, r.cfg.scenario.aes_threshold);
    r.report.detail("candidates", candidates.len());
    r.report.detail("true_schedule_offset", truth.schedule_offset);
    let Some(best) = candidates.first() else {
        return Ok(Ok(Err("no key schedule found in the dump".into())));
    };
    r.report.detail("schedule_offset", best.offset);
    r.report.detail("match_score", best.match_score);
    r.report.detail("key", hex(&best.key));
    if best.key != truth.key {
        return Ok(Ok(Err("recovered key does not match the victim key".into())));
    }
    Ok(Ok(Ok(())))
}

fn run_rsa(r: &mut Runner, bits: usize, kind: DomainKind) -> Verdict {
    let mut secret = seeds::rng(r.cfg.seed, stream::SECRET, 0);
    let (victim, truth) =
        victim_rsa(bits, Domain::new(kind, 2), &mut secret).map_err(|e| HarnessError::Usage(e.to_string()))?;
    let (dump, _) = online!(r.dump(victim, ThreadMode::CrossThread, Access::Read, 0));

    let key = &truth.key;
    let pb = key.prime_bytes();
    let mut primes = lfbleak::crypto::RsaKey::limbs_le(&key.p, pb);
    primes.extend(lfbleak::crypto::RsaKey::limbs_le(&key.q, pb));
    let known: Vec<(usize, u8)> = primes.iter().copied().enumerate().collect();
    let (accuracy, modal) = secret_metrics(&dump, r.histograms.last().unwrap(), &known);
    r.report.metrics = Metrics {
        coverage: dump.coverage(),
        accuracy,
        modal_correct_rate: modal,
    };

    // Only chunks with every byte recovered go into the pool.
    let chunks: Vec<u64> = dump
        .bytes()
        .chunks_exact(8)
        .filter_map(|c| {
            let mut b = [0u8; 8];
            for (d, s) in b.iter_mut().zip(c) {
                *d = (*s)?;
            }
            Some(u64::from_le_bytes(b))
        })
        .collect();
    r.report.detail("pool_chunks", chunks.len());
    let pool = match ChunkPool::new(8, chunks, key.n.clone()) {
        Ok(p) => p,
        Err(e) => return Ok(Ok(Err(e.to_string()))),
    };
    let (p, q) = match rsa_reconstruct(&pool, bits) {
        Ok(pq) => pq,
        Err(e) => return Ok(Ok(Err(e.to_string()))),
    };
    let product_ok = &p * &q == key.n;
    let text = format!(
        "p = {:#x}\nq = {:#x}\nN = {:#x}\np * q == N: {}\n",
        p, q, key.n, product_ok
    );
    r.artifacts.push(("rsa_key.txt".into(), text.into_bytes()));
    r.report.detail("p", format!("{p:#x}"));
    r.report.detail("q", format!("{q:#x}"));
    r.report.detail("product_matches_modulus", product_ok);
    let truth_pair = if key.p > key.q { (&key.p, &key.q) } else { (&key.q, &key.p) };
    if !product_ok || (&p, &q) != truth_pair {
        return Ok(Ok(Err("recovered factors do not match the victim key".into())));
    }
    Ok(Ok(Ok(())))
}

/// Up to two best candidates for one byte, by count then value.
fn top_two(dump: &PageDump, index: usize) -> Vec<(u8, u64)> {
    let mut v: Vec<(u8, u64)> = dump.candidates(index).iter().map(|(b, c)| (*b, *c)).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    v.truncate(2);
    v
}

/// Cartesian product of the per-byte top candidates of `len` bytes
/// starting at `start`; a combination counts as often as its rarest byte.
fn combinations(dump: &PageDump, start: usize, len: usize) -> Vec<(Vec<u8>, u64)> {
    let mut acc: Vec<(Vec<u8>, u64)> = vec![(Vec::new(), u64::MAX)];
    for i in start..start + len {
        let tops = top_two(dump, i);
        if tops.is_empty() {
            return Vec::new();
        }
        acc = acc
            .into_iter()
            .flat_map(|(prefix, c)| {
                tops.iter().map(move |(b, n)| {
                    let mut p = prefix.clone();
                    p.push(*b);
                    (p, c.min(*n))
                })
            })
            .collect();
    }
    acc
}

fn run_fann(r: &mut Runner, kind: DomainKind) -> Verdict {
    let mut secret = seeds::rng(r.cfg.seed, stream::SECRET, 0);
    let weights: Vec<f32> = (0..FANN_WEIGHTS)
        .map(|_| {
            let m: f32 = secret.gen_range(0.05..4.0);
            if secret.gen() {
                -m
            } else {
                m
            }
        })
        .collect();
    let (victim, truth) = victim_fann(&weights, r.cfg.scenario.weight_offset, Domain::new(kind, 2))
        .map_err(|e| HarnessError::Usage(e.to_string()))?;
    let (dump, _) = online!(r.dump(victim, ThreadMode::CrossThread, Access::Read, 0));

    let bytes: Vec<u8> = truth.weights.iter().flat_map(|w| w.to_le_bytes()).collect();
    let known: Vec<(usize, u8)> = bytes.iter().enumerate().map(|(i, b)| (truth.offset + i, *b)).collect();
    let (_, modal) = secret_metrics(&dump, r.histograms.last().unwrap(), &known);

    let slots: Vec<Vec<(u32, u64)>> = (0..FANN_WEIGHTS)
        .map(|i| {
            combinations(&dump, truth.offset + 4 * i, 4)
                .into_iter()
                .map(|(b, c)| (u32::from_le_bytes([b[0], b[1], b[2], b[3]]), c))
                .collect()
        })
        .collect();
    let ranked = weight_filter(&slots, &WeightFilter::default());
    let top1 = top_k_accuracy(&ranked, &truth.weights, 1);
    let naive = naive_modal(&slots);
    let naive_acc = naive
        .iter()
        .zip(&truth.weights)
        .filter(|(n, w)| **n == Some(w.to_bits()))
        .count() as f64
        / FANN_WEIGHTS as f64;
    r.report.metrics = Metrics {
        coverage: dump.coverage(),
        accuracy: top1,
        modal_correct_rate: modal,
    };
    r.report.detail("top1_accuracy", top1);
    r.report.detail("top3_accuracy", top_k_accuracy(&ranked, &truth.weights, 3));
    r.report.detail("top5_accuracy", top_k_accuracy(&ranked, &truth.weights, 5));
    r.report.detail("naive_modal_accuracy", naive_acc);
    if top1 < r.cfg.scenario.fann_min_accuracy {
        return Ok(Ok(Err(format!(
            "top-1 weight accuracy {top1:.3} is below {}",
            r.cfg.scenario.fann_min_accuracy
        ))));
    }
    Ok(Ok(Ok(())))
}

/// Smooth test picture: two crossing gradients with a few flat discs.
/// Channel values stay within 16..=239.
pub fn synthetic_image<R: Rng>(width: usize, height: usize, rng: &mut R) -> Image {
    let discs: Vec<(f64, f64, f64, [u8; 3])> = (0..4)
        .map(|_| {
            (
                rng.gen_range(0.0..width as f64),
                rng.gen_range(0.0..height as f64),
                rng.gen_range(6.0..(width.min(height) as f64 / 4.0).max(7.0)),
                [rng.gen_range(16..240), rng.gen_range(16..240), rng.gen_range(16..240)],
            )
        })
        .collect();
    let span = |v: usize, n: usize| 16 + (200 * v / n.max(2).saturating_sub(1).max(1)).min(223) as u8;
    let mut pixels = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let mut px = [span(x, width), span(y, height), span(x + y, width + height - 1)];
            for (cx, cy, rad, colour) in &discs {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                if dx * dx + dy * dy <= rad * rad {
                    px = *colour;
                }
            }
            pixels.push(px);
        }
    }
    Image { width, height, pixels }
}

fn run_image(r: &mut Runner, kind: DomainKind) -> Verdict {
    let (w, h) = (r.cfg.scenario.image_width, r.cfg.scenario.image_height);
    if w == 0 || h == 0 {
        return Err(HarnessError::Usage("image dimensions must be positive".into()));
    }
    let truth = synthetic_image(w, h, &mut seeds::rng(r.cfg.seed, stream::SECRET, 0));
    let rgb = truth.to_rgb();
    let pages = rgb.len().div_ceil(PAGE_SIZE);
    let mut dumps = Vec::with_capacity(pages);
    let mut modal_sum = 0.0;
    for i in 0..pages {
        let mut page = vec![0u8; PAGE_SIZE];
        let chunk = &rgb[i * PAGE_SIZE..((i + 1) * PAGE_SIZE).min(rgb.len())];
        page[..chunk.len()].copy_from_slice(chunk);
        let victim = victim_enclave(&page, Domain::new(kind, 1));
        let (dump, _) = online!(r.dump(victim, ThreadMode::SameThread, Access::Write, i as u64));
        let known: Vec<(usize, u8)> = chunk.iter().copied().enumerate().collect();
        modal_sum += secret_metrics(&dump, r.histograms.last().unwrap(), &known).1;
        dumps.push(dump);
    }

    let n = w * h;
    let mut candidates: Vec<Vec<PixelCandidate>> = (0..n)
        .map(|p| {
            // A pixel may straddle two pages.
            let channel = |c: usize| {
                let g = 3 * p + c;
                top_two(&dumps[g / PAGE_SIZE], g % PAGE_SIZE)
            };
            let ch: Vec<Vec<(u8, u64)>> = (0..3).map(channel).collect();
            if ch.iter().any(|c| c.is_empty()) {
                return Vec::new();
            }
            let mut out = Vec::new();
            for (r0, c0) in &ch[0] {
                for (g0, c1) in &ch[1] {
                    for (b0, c2) in &ch[2] {
                        out.push(PixelCandidate {
                            rgb: [*r0, *g0, *b0],
                            count: *c0.min(c1).min(c2),
                        });
                    }
                }
            }
            out
        })
        .collect();

    // Thin the recovered pixels down to the configured coverage.
    let mut offline = seeds::rng(r.cfg.seed, stream::OFFLINE, 0);
    let mut have: Vec<usize> = (0..n).filter(|p| !candidates[*p].is_empty()).collect();
    let dumped_coverage = have.len() as f64 / n as f64;
    let target = (r.cfg.scenario.image_coverage * n as f64).round() as usize;
    if have.len() > target {
        have.shuffle(&mut offline);
        for p in &have[target..] {
            candidates[*p].clear();
        }
    }
    let coverage = candidates.iter().filter(|c| !c.is_empty()).count() as f64 / n as f64;

    let neighbour = image_reconstruct(&candidates, w, h, r.cfg.scenario.distance);
    let random = random_choice(&candidates, w, h, &mut offline);
    let (nr, rr) = (neighbour.exact_rate(&truth), random.exact_rate(&truth));
    r.report.metrics = Metrics {
        coverage,
        accuracy: nr,
        modal_correct_rate: modal_sum / pages as f64,
    };
    r.report.detail("pages", pages);
    r.report.detail("dumped_pixel_coverage", dumped_coverage);
    r.report.detail("neighbour_exact_rate", nr);
    r.report.detail("random_exact_rate", rr);
    r.report.detail("neighbour_psnr", neighbour.psnr(&truth));
    r.report.detail("random_psnr", random.psnr(&truth));
    for (name, img) in [("image.ppm", &neighbour), ("image-random.ppm", &random), ("image-original.ppm", &truth)] {
        let mut buf = Vec::new();
        img.write_ppm(&mut buf).map_err(|e| HarnessError::Internal(e.to_string()))?;
        r.artifacts.push((name.into(), buf));
    }
    if nr <= rr {
        return Ok(Ok(Err(format!(
            "neighbour reconstruction ({nr:.3}) does not beat random choice ({rr:.3})"
        ))));
    }
    Ok(Ok(Ok(())))
}

/// Text slide encoded by a kernel pointer to the timer callback.
pub fn slide_of(v: u64) -> Option<u64> {
    let off = v.checked_sub(KERNEL_TEXT_BASE)?.checked_sub(HRTICK_OFFSET)?;
    (off % KASLR_ALIGN == 0 && off / KASLR_ALIGN < KASLR_SLOTS).then_some(off)
}

/// Stack canaries have a zero low byte and, in practice, no other zero.
pub fn canary_like(v: u64) -> bool {
    let b = v.to_le_bytes();
    b[0] == 0 && b[1..].iter().all(|x| *x != 0) && slide_of(v).is_none()
}

fn run_kernel(r: &mut Runner, kind: DomainKind, canary: bool) -> Verdict {
    if !matches!(kind, DomainKind::Kernel | DomainKind::VmGuest | DomainKind::Hypervisor) {
        return Err(HarnessError::Usage(format!(
            "victim domain {} cannot run the kernel victim",
            domain_kind_label(kind)
        )));
    }
    let hypervisor = kind == DomainKind::Hypervisor;
    let runs = r.cfg.scenario.runs;
    let mut dumps = Vec::with_capacity(runs);
    let mut truths = Vec::with_capacity(runs);
    let mut acc_sum = 0.0;
    let mut modal_sum = 0.0;
    for run in 0..runs {
        // The guest is rebooted between runs; the hypervisor is not.
        let boot = seeds::derive(r.cfg.seed, stream::BOOT, if hypervisor { 0 } else { run as u64 });
        let (victim, truth) = victim_kernel(boot, Domain::new(kind, 0));
        let (dump, _) = online!(r.dump(victim, ThreadMode::SameThread, Access::Write, run as u64));
        let mut known = Vec::new();
        for ((line, off), v) in [(truth.pointer_slot, truth.pointer), (truth.canary_slot, truth.canary)] {
            let base = line * LINE_SIZE + off;
            known.extend(v.to_le_bytes().iter().enumerate().map(|(i, b)| (base + i, *b)));
        }
        let (a, m) = secret_metrics(&dump, r.histograms.last().unwrap(), &known);
        acc_sum += a;
        modal_sum += m;
        dumps.push(dump);
        truths.push(truth);
    }
    r.report.metrics = Metrics {
        coverage: dumps.iter().map(|d| d.coverage()).sum::<f64>() / runs as f64,
        accuracy: acc_sum / runs as f64,
        modal_correct_rate: modal_sum / runs as f64,
    };

    let search = StaticSearch {
        criterion: if hypervisor { SlotCriterion::Stable } else { SlotCriterion::Varying },
        min_runs: runs,
        min_count: (r.report.iterations as u64 / 4).max(1),
        min_share: 0.5,
    };
    let slots = find_static_slots(&dumps, &search);
    r.report.detail("criterion", search.criterion);
    r.report.detail("qualifying_slots", slots.len());
    let matches = |v: u64| if canary { canary_like(v) } else { slide_of(v).is_some() };
    let Some(slot) = slots.iter().find(|s| s.values.iter().all(|v| matches(*v))) else {
        return Ok(Ok(Err(format!(
            "no slot holds a {} in every run",
            if canary { "canary" } else { "kernel text pointer" }
        ))));
    };
    r.report.detail("slot", (slot.line, slot.offset));
    r.report.detail("owner", classify_across_reboot(&slot.values));
    let expected_slot = |t: &lfbleak::victims::KernelTruth| if canary { t.canary_slot } else { t.pointer_slot };
    if canary {
        r.report.detail("canaries", slot.values.iter().map(|v| format!("{v:#018x}")).collect::<Vec<_>>());
    } else {
        let slides: Vec<String> = slot.values.iter().map(|v| format!("{:#x}", slide_of(*v).unwrap())).collect();
        r.report.detail("slides", slides);
    }
    let truth_values: Vec<u64> = truths.iter().map(|t| if canary { t.canary } else { t.pointer }).collect();
    if (slot.line, slot.offset) != expected_slot(&truths[0]) || slot.values != truth_values {
        return Ok(Ok(Err("recovered values do not match the victim".into())));
    }
    Ok(Ok(Ok(())))
}

/// Contents of the victim page after the attack, as the victim sees it.
pub fn architectural_page(m: &MachineState, base: u64) -> Vec<u8> {
    (0..PAGE_SIZE / LINE_SIZE)
        .flat_map(|i| m.peek_line(Addr(base + (i * LINE_SIZE) as u64)).unwrap_or([0; LINE_SIZE]))
        .collect()
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_names_round_trip() {
        let cfg = Config::default();
        for name in ["aes-128", "aes-256", "rsa-512", "fann", "image", "kaslr", "canary"] {
            assert_eq!(Scenario::parse(name, &cfg).unwrap().to_string(), name);
        }
        assert_eq!(Scenario::parse("aes", &cfg).unwrap(), Scenario::Aes { bits: 128 });
        assert_eq!(Scenario::parse("rsa", &cfg).unwrap(), Scenario::Rsa { bits: 1024 });
        assert!(Scenario::parse("aes-100", &cfg).is_err());
        assert!(Scenario::parse("rsa-768", &cfg).is_err());
        assert!(Scenario::parse("des", &cfg).is_err());
    }

    #[test]
    fn pointer_and_canary_filters() {
        let p = KERNEL_TEXT_BASE + 7 * KASLR_ALIGN + HRTICK_OFFSET;
        assert_eq!(slide_of(p), Some(7 * KASLR_ALIGN));
        assert_eq!(slide_of(p + 8), None);
        assert_eq!(slide_of(KERNEL_TEXT_BASE + KASLR_SLOTS * KASLR_ALIGN + HRTICK_OFFSET), None);
        assert!(canary_like(0x1122_3344_5566_7700));
        assert!(!canary_like(0x1122_3344_5566_7701));
        assert!(!canary_like(0x1122_3300_5566_7700));
        assert!(!canary_like(p));
    }

    #[test]
    fn synthetic_image_is_in_range_and_smooth() {
        let img = synthetic_image(64, 48, &mut seeds::rng(1, stream::SECRET, 0));
        assert!(img.pixels.iter().flatten().all(|c| (16..=239).contains(c)));
        let rough = img
            .pixels
            .windows(2)
            .filter(|w| w[0].iter().zip(&w[1]).any(|(a, b)| a.abs_diff(*b) > 8))
            .count();
        assert!(rough < img.pixels.len() / 10);
    }

    #[test]
    fn combinations_take_the_rarest_count() {
        let mut h = LeakHistogram::new();
        h.add_n(0, 0, (1, 2), 5);
        h.add_n(0, 0, (3, 2), 2);
        let dump = PageDump::from_histogram(&h);
        let c = combinations(&dump, 0, 2);
        assert_eq!(c, vec![(vec![1, 2], 5), (vec![3, 2], 2)]);
    }

    #[test]
    fn secret_metrics_scores_known_bytes() {
        let mut h = LeakHistogram::new();
        h.add_n(0, 0, (0xaa, 0xbb), 3);
        let dump = PageDump::from_histogram(&h);
        let (acc, modal) = secret_metrics(&dump, &h, &[(0, 0xaa), (1, 0xbb), (2, 0xcc)]);
        assert!((acc - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(modal, 1.0);
    }
}
