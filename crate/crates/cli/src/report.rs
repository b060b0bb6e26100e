use std::collections::BTreeMap;

use lfbleak::{Mitigations, NoiseConfig};
use serde::{Deserialize, Serialize};

/// Process exit codes of the command-line tool.
pub mod exit {
    pub const VERIFIED: i32 = 0;
    pub const INTERNAL: i32 = 1;
    pub const USAGE: i32 = 2;
    /// The attack could not run or produced nothing, e.g. TSX disabled.
    pub const ONLINE_FAILURE: i32 = 3;
    /// Data was collected but the secret was not recovered.
    pub const OFFLINE_FAILURE: i32 = 4;
    /// A replay did not reproduce the stored outputs.
    pub const REPLAY_MISMATCH: i32 = 5;
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Verified,
    OnlineFailure,
    OfflineFailure,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Verified => exit::VERIFIED,
            Outcome::OnlineFailure => exit::ONLINE_FAILURE,
            Outcome::OfflineFailure => exit::OFFLINE_FAILURE,
        }
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Fraction of dumped bytes with at least one candidate.
    pub coverage: f64,
    /// Fraction of secret bytes recovered correctly.
    pub accuracy: f64,
    /// Fraction of sampled cells over the secret whose modal pair is right.
    pub modal_correct_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario: String,
    pub seed: u64,
    pub iterations: usize,
    pub victim_domain: String,
    pub noise: NoiseConfig,
    pub mitigations: Mitigations,
    pub outcome: Outcome,
    pub failure: Option<String>,
    pub metrics: Metrics,
    pub details: BTreeMap<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<u64>,
}

impl ExperimentReport {
    pub fn detail(&mut self, key: &str, value: impl Serialize) {
        self.details
            .insert(key.to_string(), serde_json::to_value(value).expect("detail serializes"));
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
