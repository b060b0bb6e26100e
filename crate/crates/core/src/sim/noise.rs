use serde::{Deserialize, Serialize};

use super::SimError;

/// Knobs for the imperfections of the sampling primitive.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Probability that one transactional sample forwards buffer data at
    /// all. Failed samples transmit nothing.
    pub taa_success_prob: f64,
    /// Probability, at full buffer occupancy, that a sample reads some other
    /// valid entry instead of the intended one. Scales linearly with the
    /// number of other valid entries.
    pub spurious_entry_prob: f64,
    /// Per-byte probability that a spurious read returns 0x00 or 0xff
    /// instead of the entry's byte.
    pub zero_ff_inflation: f64,
}

impl NoiseConfig {
    pub const OFF: NoiseConfig = NoiseConfig {
        taa_success_prob: 1.0,
        spurious_entry_prob: 0.0,
        zero_ff_inflation: 0.0,
    };

    pub fn off() -> Self {
        Self::OFF
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, v) in [
            ("taa_success_prob", self.taa_success_prob),
            ("spurious_entry_prob", self.spurious_entry_prob),
            ("zero_ff_inflation", self.zero_ff_inflation),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SimError::InvalidNoise(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn is_off(&self) -> bool {
        *self == Self::OFF
    }

    /// Degrade the channel, used for the cross-VM variants which see more
    /// unrelated buffer traffic.
    pub fn with_extra_noise(mut self, increment: f64) -> Self {
        self.taa_success_prob = (self.taa_success_prob - increment).clamp(0.0, 1.0);
        self.spurious_entry_prob = (self.spurious_entry_prob + increment).clamp(0.0, 1.0);
        self
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            taa_success_prob: 0.6,
            spurious_entry_prob: 0.3,
            zero_ff_inflation: 0.3,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range() {
        let n = NoiseConfig {
            taa_success_prob: 1.5,
            ..NoiseConfig::default()
        };
        assert!(n.validate().is_err());
        assert!(NoiseConfig::default().validate().is_ok());
        assert!(NoiseConfig::off().is_off());
    }
}
