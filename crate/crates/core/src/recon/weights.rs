//! Pick neural-network weights out of noisy 4-byte candidates.

use rand::Rng;

use crate::sim::NoiseConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct WeightCandidate {
    /// Index of the 4-byte slot.
    pub slot: usize,
    pub value: u32,
    pub frequency: u64,
    pub score: f64,
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct WeightFilter {
    /// Score multiplier for candidates holding a 0x00 or 0xff byte.
    pub penalty: f64,
    /// Accepted most-significant bytes, as inclusive ranges.
    pub bands: [(u8, u8); 2],
}

impl Default for WeightFilter {
    fn default() -> Self {
        Self {
            penalty: 0.25,
            bands: [(0x3d, 0x43), (0xbd, 0xc3)],
        }
    }
}

impl WeightFilter {
    /// Whether the sign/exponent byte is in one of the bands, i.e. the
    /// float has a plausible weight magnitude.
    pub fn exponent_ok(&self, v: u32) -> bool {
        let msb = (v >> 24) as u8;
        self.bands.iter().any(|(lo, hi)| (*lo..=*hi).contains(&msb))
    }

    fn has_extreme_byte(v: u32) -> bool {
        v.to_le_bytes().iter().any(|b| *b == 0x00 || *b == 0xff)
    }
}

/// Rank the candidates of every slot. Out-of-band values are dropped,
/// values with a 0x00/0xff byte have their frequency scaled by the
/// penalty, and the rest are sorted by score, then by lower value.
pub fn weight_filter(slots: &[Vec<(u32, u64)>], filter: &WeightFilter) -> Vec<Vec<WeightCandidate>> {
    slots
        .iter()
        .enumerate()
        .map(|(slot, cands)| {
            let mut ranked: Vec<WeightCandidate> = cands
                .iter()
                .filter(|(v, f)| *f > 0 && filter.exponent_ok(*v))
                .map(|&(value, frequency)| {
                    let mut score = frequency as f64;
                    if WeightFilter::has_extreme_byte(value) {
                        score *= filter.penalty;
                    }
                    WeightCandidate {
                        slot,
                        value,
                        frequency,
                        score,
                    }
                })
                .collect();
            ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.value.cmp(&b.value)));
            ranked
        })
        .collect()
}

/// Top-k values of one ranked slot.
pub fn top_k(ranked: &[WeightCandidate], k: usize) -> Vec<u32> {
    ranked.iter().take(k).map(|c| c.value).collect()
}

/// Most frequent raw value per slot, no filtering.
pub fn naive_modal(slots: &[Vec<(u32, u64)>]) -> Vec<Option<u32>> {
    slots
        .iter()
        .map(|c| {
            c.iter()
                .filter(|(_, f)| *f > 0)
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(v, _)| *v)
        })
        .collect()
}

/// Fraction of slots whose top-k contains the true weight.
pub fn top_k_accuracy(ranked: &[Vec<WeightCandidate>], truth: &[f32], k: usize) -> f64 {
    let hits = ranked
        .iter()
        .zip(truth)
        .filter(|(r, w)| top_k(r, k).contains(&w.to_bits()))
        .count();
    hits as f64 / truth.len().max(1) as f64
}

/// Candidate lists as the leak would produce them for `weights`.
///
/// Each of `samples` draws fails outright with probability
/// `1 - taa_success_prob`. A successful draw returns the true value unless
/// it is spurious (probability `spurious_entry_prob`), in which case it
/// comes from a stale entry: half the time a zeroed one, otherwise one
/// holding another weight. Every byte of a spurious value is then replaced
/// by 0x00 or 0xff with probability `zero_ff_inflation`.
pub fn synthetic_candidates<R: Rng>(weights: &[f32], samples: usize, noise: &NoiseConfig, rng: &mut R) -> Vec<Vec<(u32, u64)>> {
    weights
        .iter()
        .map(|w| {
            let mut counts: std::collections::BTreeMap<u32, u64> = Default::default();
            for _ in 0..samples {
                if !rng.gen_bool(noise.taa_success_prob) {
                    continue;
                }
                let v = if rng.gen_bool(noise.spurious_entry_prob) {
                    let stale = if rng.gen_bool(0.5) {
                        0
                    } else {
                        weights[rng.gen_range(0..weights.len())].to_bits()
                    };
                    let mut bytes = stale.to_le_bytes();
                    for b in bytes.iter_mut() {
                        if rng.gen_bool(noise.zero_ff_inflation) {
                            *b = if rng.gen_bool(0.5) { 0x00 } else { 0xff };
                        }
                    }
                    u32::from_le_bytes(bytes)
                } else {
                    w.to_bits()
                };
                *counts.entry(v).or_default() += 1;
            }
            counts.into_iter().collect()
        })
        .collect()
}
