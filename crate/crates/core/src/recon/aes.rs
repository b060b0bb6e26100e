//! Find AES keys in a memory dump by checking for their round keys.

use crate::crypto::aes::{expand_key, KeySize, BLOCK};

pub const DEFAULT_AES_THRESHOLD: f64 = 0.75;

#[derive(Clone, Debug, PartialEq)]
pub struct AesKeyCandidate {
    pub offset: usize,
    pub key: Vec<u8>,
    /// Fraction of the derived round-key bytes found right after the key.
    pub match_score: f64,
}

/// Treat every window of the key size as a key, expand it and compare the
/// derived round keys with the bytes that follow in the dump. Unknown dump
/// bytes and bytes past the end count as mismatches.
///
/// Returns candidates scoring at least `threshold`, best first; equal
/// scores keep dump order. A dump too short to hold a key and one round
/// key yields nothing. `threshold` must be in (0, 1].
pub fn aes_locate(dump: &[Option<u8>], size: KeySize, threshold: f64) -> Vec<AesKeyCandidate> {
    assert!(threshold > 0.0 && threshold <= 1.0, "threshold {threshold} outside (0, 1]");
    let n = size.key_bytes();
    if dump.len() < n + BLOCK {
        return Vec::new();
    }
    let derived = size.schedule_bytes() - n;
    let allowed_misses = ((1.0 - threshold) * derived as f64).floor() as usize;
    let mut out = Vec::new();
    let mut key = vec![0u8; n];
    'windows: for offset in 0..=dump.len() - n {
        for (k, d) in key.iter_mut().zip(&dump[offset..offset + n]) {
            match d {
                Some(b) => *k = *b,
                None => continue 'windows,
            }
        }
        let schedule = expand_key(&key).expect("key length matches size");
        let mut misses = 0;
        for (i, expected) in schedule[n..].iter().enumerate() {
            if dump.get(offset + n + i).copied().flatten() != Some(*expected) {
                misses += 1;
                if misses > allowed_misses {
                    continue 'windows;
                }
            }
        }
        let score = (derived - misses) as f64 / derived as f64;
        if score >= threshold {
            out.push(AesKeyCandidate {
                offset,
                key: key.clone(),
                match_score: score,
            });
        }
    }
    out.sort_by(|a, b| b.match_score.total_cmp(&a.match_score).then(a.offset.cmp(&b.offset)));
    out
}

/// Convenience wrapper for a fully known dump.
pub fn aes_locate_bytes(dump: &[u8], size: KeySize, threshold: f64) -> Vec<AesKeyCandidate> {
    let d: Vec<Option<u8>> = dump.iter().map(|b| Some(*b)).collect();
    aes_locate(&d, size, threshold)
}
