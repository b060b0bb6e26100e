//! RSA key generation with CRT parameters.

use num_bigint::BigUint;
use num_prime::RandPrime;
use num_traits::One;
use rand::Rng;

pub const PUBLIC_EXPONENT: u32 = 65537;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RsaKey {
    pub bits: usize,
    pub n: BigUint,
    pub e: BigUint,
    pub d: BigUint,
    pub p: BigUint,
    pub q: BigUint,
    pub dp: BigUint,
    pub dq: BigUint,
    pub qinv: BigUint,
}

impl RsaKey {
    /// Generate a key whose modulus has exactly `bits` bits. `bits` must be
    /// even and at least 32.
    pub fn generate<R: Rng>(bits: usize, rng: &mut R) -> Self {
        assert!(bits >= 32 && bits.is_multiple_of(2), "unsupported modulus size {bits}");
        let e = BigUint::from(PUBLIC_EXPONENT);
        loop {
            let p: BigUint = rng.gen_prime_exact(bits / 2, None);
            let q: BigUint = rng.gen_prime_exact(bits / 2, None);
            if p == q {
                continue;
            }
            let n = &p * &q;
            if n.bits() as usize != bits {
                continue;
            }
            let one = BigUint::one();
            let p1 = &p - &one;
            let q1 = &q - &one;
            let phi = &p1 * &q1;
            let Some(d) = e.modinv(&phi) else {
                continue;
            };
            let qinv = q.modinv(&p).expect("distinct primes are coprime");
            return RsaKey {
                bits,
                dp: &d % &p1,
                dq: &d % &q1,
                n,
                e,
                d,
                p,
                q,
                qinv,
            };
        }
    }

    /// Size of one prime in bytes as stored in memory.
    pub fn prime_bytes(&self) -> usize {
        self.bits / 16
    }

    /// Little-endian encoding padded to `len` bytes, the way bignum
    /// libraries keep their limbs.
    pub fn limbs_le(x: &BigUint, len: usize) -> Vec<u8> {
        let mut v = x.to_bytes_le();
        v.resize(len, 0);
        v
    }

    pub fn encrypt(&self, m: &BigUint) -> BigUint {
        m.modpow(&self.e, &self.n)
    }

    /// CRT decryption, the access pattern that keeps p and q hot.
    pub fn decrypt(&self, c: &BigUint) -> BigUint {
        let m1 = c.modpow(&self.dp, &self.p);
        let m2 = c.modpow(&self.dq, &self.q);
        let diff = (&m1 + &self.p - (&m2 % &self.p)) % &self.p;
        let h = (&self.qinv * diff) % &self.p;
        m2 + h * &self.q
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_key_is_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k = RsaKey::generate(512, &mut rng);
        assert_eq!(k.n.bits(), 512);
        assert_eq!(&k.p * &k.q, k.n);
        let m = BigUint::from(0x1234_5678_9abc_u64);
        let c = k.encrypt(&m);
        assert_eq!(k.decrypt(&c), m);
        assert_eq!(k.prime_bytes(), 32);
    }

    #[test]
    fn limbs_are_little_endian_and_padded() {
        assert_eq!(RsaKey::limbs_le(&BigUint::from(0x0102u32), 4), vec![2, 1, 0, 0]);
    }
}
