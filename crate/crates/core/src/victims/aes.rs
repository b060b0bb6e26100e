use rand::Rng;

use crate::addr::PAGE_SIZE;
use crate::crypto::aes::{self, KeySize, BLOCK};
use crate::sim::{Domain, Op};

use super::{line_stores, VictimPage, VictimProgram};

pub const AES_PAGE: u64 = 0x5555_5556_0000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AesTruth {
    pub key: Vec<u8>,
    pub schedule: Vec<u8>,
    pub plaintext: Vec<u8>,
    /// Page offset of the key schedule.
    pub schedule_offset: usize,
}

/// Decrypts the same ciphertext on every step, then yields.
///
/// The decrypted block goes to the start of the page and the expanded key
/// follows it directly, so the plaintext shares its line with the key and
/// the first two round keys.
pub fn victim_aes<R: Rng>(size: KeySize, message: &[u8; BLOCK], domain: Domain, rng: &mut R) -> (VictimProgram, AesTruth) {
    let mut key = vec![0u8; size.key_bytes()];
    rng.fill(&mut key[..]);
    let schedule = aes::expand_key(&key).expect("valid key length");
    let ciphertext = aes::encrypt_block(&schedule, message);

    let decrypted = aes::decrypt_block(&schedule, &ciphertext);
    let mut image = decrypted.to_vec();
    image.extend_from_slice(&schedule);
    let mut ops = line_stores(AES_PAGE, &image);
    ops.push(Op::Yield);

    // The ciphertext sits in the page from the start; it is only read.
    let mut contents = vec![0u8; PAGE_SIZE];
    contents[PAGE_SIZE - BLOCK..].copy_from_slice(&ciphertext);
    let program = VictimProgram {
        id: format!("aes-{}", size.bits()),
        domain,
        pages: vec![VictimPage {
            base: AES_PAGE,
            contents,
        }],
        setup: Vec::new(),
        steps: vec![ops],
    };
    let truth = AesTruth {
        key,
        schedule,
        plaintext: decrypted.to_vec(),
        schedule_offset: BLOCK,
    };
    (program, truth)
}
