//! Factor N from an unordered pool of fixed-width chunks of p and q.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{One, Zero};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RsaReconError {
    #[error("modulus must be odd and positive")]
    BadModulus,
    #[error("chunk width must be 1..=8 bytes")]
    BadChunkWidth,
    #[error("modulus size {bits} is not a multiple of two chunks")]
    BadSize { bits: usize },
    #[error("empty chunk pool")]
    EmptyPool,
    /// `level` chunks per prime were matched before every branch died.
    #[error("no consistent assignment beyond level {level} of {levels}")]
    NoConsistentAssignment { level: usize, levels: usize },
}

/// Leaked chunks of p and q in no particular order. Chunks are read as
/// little-endian integers, the limb order of the victim's bignums.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkPool {
    chunk_bytes: usize,
    counts: BTreeMap<u64, usize>,
    modulus: BigUint,
}

impl ChunkPool {
    pub fn new(chunk_bytes: usize, chunks: impl IntoIterator<Item = u64>, modulus: BigUint) -> Result<Self, RsaReconError> {
        if !(1..=8).contains(&chunk_bytes) {
            return Err(RsaReconError::BadChunkWidth);
        }
        if modulus.is_zero() || !modulus.bit(0) {
            return Err(RsaReconError::BadModulus);
        }
        let mut counts = BTreeMap::new();
        for c in chunks {
            *counts.entry(c).or_insert(0) += 1;
        }
        Ok(Self {
            chunk_bytes,
            counts,
            modulus,
        })
    }

    /// Split raw bytes into chunks of `chunk_bytes`, dropping a short tail.
    pub fn from_bytes(chunk_bytes: usize, bytes: &[u8], modulus: BigUint) -> Result<Self, RsaReconError> {
        let chunks = bytes.chunks_exact(chunk_bytes.max(1)).map(|c| {
            let mut b = [0u8; 8];
            b[..c.len()].copy_from_slice(c);
            u64::from_le_bytes(b)
        });
        Self::new(chunk_bytes, chunks.collect::<Vec<_>>(), modulus)
    }

    pub fn len(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }
}

#[derive(Clone)]
struct Branch {
    p: Vec<u64>,
    q: Vec<u64>,
}

impl Branch {
    fn used(&self, v: u64) -> usize {
        self.p.iter().chain(&self.q).filter(|x| **x == v).count()
    }

    fn value(chunks: &[u64], w: usize) -> BigUint {
        let mut acc = BigUint::zero();
        for c in chunks.iter().rev() {
            acc = (acc << w) | BigUint::from(*c);
        }
        acc
    }
}

/// Inverse of an odd `a` modulo 2^w by Newton iteration.
fn inv_pow2(a: u64, mask: u64) -> u64 {
    let mut x = a;
    for _ in 0..6 {
        x = x.wrapping_mul(2u64.wrapping_sub(a.wrapping_mul(x)));
    }
    x & mask
}

/// Branch-and-prune over chunk levels, least significant first.
///
/// At level k every surviving (p, q) suffix pair is extended by one chunk
/// each; an extension is kept iff the product agrees with N on the low
/// k + 1 chunks. Given p's new chunk, q's is forced, so each level costs
/// one pass over the pool per branch. `beam` caps the surviving branches.
pub fn rsa_reconstruct_with(pool: &ChunkPool, bits: usize, beam: Option<usize>) -> Result<(BigUint, BigUint), RsaReconError> {
    if pool.is_empty() {
        return Err(RsaReconError::EmptyPool);
    }
    let w = pool.chunk_bytes * 8;
    if bits == 0 || !bits.is_multiple_of(2 * w) {
        return Err(RsaReconError::BadSize { bits });
    }
    let levels = bits / (2 * w);
    let mask = if w == 64 { u64::MAX } else { (1u64 << w) - 1 };
    let n = &pool.modulus;
    let avail = |b: &Branch, v: u64, extra: usize| pool.counts.get(&v).copied().unwrap_or(0) > b.used(v) + extra;
    let low_digit = |x: &BigUint| x.iter_u64_digits().next().unwrap_or(0) & mask;

    // Level 0: p0 * q0 == N mod 2^w; keep one of each mirrored pair.
    let n0 = low_digit(n);
    let mut branches = Vec::new();
    for &a in pool.counts.keys() {
        if a & 1 == 0 {
            continue;
        }
        let b = n0.wrapping_mul(inv_pow2(a, mask)) & mask;
        if b < a {
            continue;
        }
        let empty = Branch { p: vec![], q: vec![] };
        if avail(&empty, a, 0) && avail(&empty, b, (a == b) as usize) {
            branches.push(Branch { p: vec![a], q: vec![b] });
        }
    }
    if branches.is_empty() {
        return Err(RsaReconError::NoConsistentAssignment { level: 0, levels });
    }

    for k in 1..levels {
        let modulus = BigUint::one() << (w * (k + 1));
        let n_low = n % &modulus;
        let mut next = Vec::new();
        for br in &branches {
            let pq = (Branch::value(&br.p, w) * Branch::value(&br.q, w)) % &modulus;
            let t = low_digit(&(((&n_low + &modulus - pq) % &modulus) >> (w * k)));
            let (p0, q0) = (br.p[0], br.q[0]);
            let p0_inv = inv_pow2(p0, mask);
            for &a in pool.counts.keys() {
                if !avail(br, a, 0) {
                    continue;
                }
                let b = t.wrapping_sub(a.wrapping_mul(q0)).wrapping_mul(p0_inv) & mask;
                if !avail(br, b, (a == b) as usize) {
                    continue;
                }
                let mut nb = br.clone();
                nb.p.push(a);
                nb.q.push(b);
                next.push(nb);
            }
        }
        if next.is_empty() {
            return Err(RsaReconError::NoConsistentAssignment { level: k, levels });
        }
        if let Some(cap) = beam {
            next.truncate(cap.max(1));
        }
        branches = next;
    }

    for br in &branches {
        let p = Branch::value(&br.p, w);
        let q = Branch::value(&br.q, w);
        if p > BigUint::one() && q > BigUint::one() && &(&p * &q) == n {
            return Ok(if p >= q { (p, q) } else { (q, p) });
        }
    }
    Err(RsaReconError::NoConsistentAssignment { level: levels, levels })
}

/// Exhaustive variant with no beam limit.
pub fn rsa_reconstruct(pool: &ChunkPool, bits: usize) -> Result<(BigUint, BigUint), RsaReconError> {
    rsa_reconstruct_with(pool, bits, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_single_byte_chunks() {
        let pool = ChunkPool::new(1, [0x3d, 0x35], BigUint::from(3233u32)).unwrap();
        let (p, q) = rsa_reconstruct(&pool, 16).unwrap();
        assert_eq!((p, q), (BigUint::from(61u32), BigUint::from(53u32)));
    }

    #[test]
    fn inverse_mod_power_of_two() {
        for a in [1u64, 3, 0xdead_beef, u64::MAX] {
            assert_eq!(a.wrapping_mul(inv_pow2(a, u64::MAX)), 1);
            assert_eq!(a.wrapping_mul(inv_pow2(a, 0xff)) & 0xff, 1);
        }
    }

    #[test]
    fn rejects_even_modulus_and_bad_width() {
        assert_eq!(
            ChunkPool::new(8, [1], BigUint::from(10u32)).unwrap_err(),
            RsaReconError::BadModulus
        );
        assert_eq!(
            ChunkPool::new(9, [1], BigUint::from(11u32)).unwrap_err(),
            RsaReconError::BadChunkWidth
        );
    }
}
