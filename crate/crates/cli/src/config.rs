//! Experiment configuration. Command-line flags fill in a [`Config`]; a
//! TOML file, when given, overrides whatever the flags set.

use std::path::{Path, PathBuf};

use lfbleak::attack::{AttackOptions, ThreadMode};
use lfbleak::recon::Distance;
use lfbleak::{DomainKind, Mitigations, NoiseConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Samples per (set, offset). Each scenario has its own default.
    pub iterations: Option<usize>,
    pub out: PathBuf,
    /// Add the wall-clock time to reports. Off by default because it makes
    /// reports differ between otherwise identical runs.
    pub record_time: bool,
    pub noise: NoiseConfig,
    pub mitigations: Mitigations,
    pub attack: AttackOptions,
    pub scenario: ScenarioConfig,
    pub sweep: SweepConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            iterations: None,
            out: PathBuf::from("out"),
            record_time: false,
            noise: NoiseConfig::default(),
            mitigations: Mitigations::default(),
            attack: AttackOptions::default(),
            scenario: ScenarioConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Domain label of the victim. Scenarios pick a sensible one if unset.
    pub victim_domain: Option<DomainKind>,
    /// Extra noise for victims in a virtual machine or the hypervisor.
    pub vm_noise_increment: f64,
    pub aes_key_bits: usize,
    pub aes_threshold: f64,
    pub rsa_bits: usize,
    pub weight_offset: usize,
    /// Top-1 accuracy the weight recovery must reach to count as verified.
    pub fann_min_accuracy: f64,
    pub image_width: usize,
    pub image_height: usize,
    /// Fraction of pixels left with candidates after dropping the rest.
    pub image_coverage: f64,
    pub distance: Distance,
    /// Victim restarts for the static-slot scenarios.
    pub runs: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            victim_domain: None,
            vm_noise_increment: 0.05,
            aes_key_bits: 128,
            aes_threshold: lfbleak::recon::DEFAULT_AES_THRESHOLD,
            rsa_bits: 1024,
            weight_offset: lfbleak::victims::FANN_DEFAULT_OFFSET,
            fann_min_accuracy: 0.9,
            image_width: 128,
            image_height: 194,
            image_coverage: 0.71,
            distance: Distance::SquaredDifference,
            runs: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub mode: ThreadMode,
    /// Eviction-set sizes for the eviction-size sweep.
    pub sizes: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            mode: ThreadMode::SameThread,
            sizes: (1..=12).collect(),
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.noise.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let s = &self.scenario;
        if !(0.0..=1.0).contains(&s.image_coverage) {
            return Err(ConfigError::Invalid("image_coverage must be in [0, 1]".into()));
        }
        if !(s.aes_threshold > 0.0 && s.aes_threshold <= 1.0) {
            return Err(ConfigError::Invalid("aes_threshold must be in (0, 1]".into()));
        }
        if s.runs < 2 {
            return Err(ConfigError::Invalid("runs must be at least 2".into()));
        }
        if !(1..=lfbleak::attack::MAX_EVSET).contains(&self.attack.evset_size) {
            return Err(ConfigError::Invalid("evset_size must be in 1..=16".into()));
        }
        if self.sweep.sizes.iter().any(|s| !(1..=lfbleak::attack::MAX_EVSET).contains(s)) {
            return Err(ConfigError::Invalid("sweep sizes must be in 1..=16".into()));
        }
        if self.iterations == Some(0) {
            return Err(ConfigError::Invalid("iterations must be positive".into()));
        }
        Ok(())
    }

    /// Apply a TOML file on top of `self`: keys present in the file win,
    /// everything else keeps its current value.
    pub fn overridden_by_file(&self, path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        self.overridden_by_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    pub fn overridden_by_str(&self, text: &str) -> Result<Config, toml::de::Error> {
        let file: toml::Table = toml::from_str(text)?;
        let mut base = toml::Table::try_from(self).expect("config serializes");
        merge(&mut base, file);
        Config::deserialize(toml::Value::Table(base))
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
