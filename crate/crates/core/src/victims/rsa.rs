use rand::Rng;

use crate::addr::{Addr, PAGE_SIZE};
use crate::crypto::RsaKey;
use crate::sim::{Domain, Op};

use super::{VictimError, VictimPage, VictimProgram};

pub const RSA_PAGE: u64 = 0x5555_5557_0000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RsaTruth {
    pub key: RsaKey,
}

/// CRT decryption loop. p and q sit back to back at the start of the page
/// as little-endian limbs, followed by d, dp and dq. Every step reads each
/// 8-byte limb of p and q; the other components are never touched.
pub fn victim_rsa<R: Rng>(bits: usize, domain: Domain, rng: &mut R) -> Result<(VictimProgram, RsaTruth), VictimError> {
    if !matches!(bits, 512 | 1024 | 2048 | 4096) {
        return Err(VictimError::UnsupportedSize(bits));
    }
    let key = RsaKey::generate(bits, rng);
    let half = key.prime_bytes();
    let mut contents = Vec::with_capacity(PAGE_SIZE);
    contents.extend(RsaKey::limbs_le(&key.p, half));
    contents.extend(RsaKey::limbs_le(&key.q, half));
    contents.extend(RsaKey::limbs_le(&key.d, bits / 8));
    contents.extend(RsaKey::limbs_le(&key.dp, half));
    contents.extend(RsaKey::limbs_le(&key.dq, half));
    contents.resize(PAGE_SIZE, 0);

    let mut ops: Vec<Op> = (0..2 * half)
        .step_by(8)
        .map(|off| Op::load(Addr(RSA_PAGE + off as u64)))
        .collect();
    ops.push(Op::Yield);
    let program = VictimProgram {
        id: format!("rsa-{bits}"),
        domain,
        pages: vec![VictimPage {
            base: RSA_PAGE,
            contents,
        }],
        setup: Vec::new(),
        steps: vec![ops],
    };
    Ok((program, RsaTruth { key }))
}
