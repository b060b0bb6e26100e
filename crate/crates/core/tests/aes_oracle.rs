//! The hand-written cipher against the `aes` crate.

use aes::cipher::{generic_array::GenericArray, BlockDecrypt, BlockEncrypt, KeyInit};
use lfbleak::crypto::aes::{decrypt_block, encrypt_block, expand_key};
use proptest::prelude::*;

fn oracle_encrypt(key: &[u8], block: [u8; 16]) -> [u8; 16] {
    let mut b = GenericArray::from(block);
    match key.len() {
        16 => aes::Aes128::new_from_slice(key).unwrap().encrypt_block(&mut b),
        24 => aes::Aes192::new_from_slice(key).unwrap().encrypt_block(&mut b),
        _ => aes::Aes256::new_from_slice(key).unwrap().encrypt_block(&mut b),
    }
    b.into()
}

fn oracle_decrypt(key: &[u8], block: [u8; 16]) -> [u8; 16] {
    let mut b = GenericArray::from(block);
    match key.len() {
        16 => aes::Aes128::new_from_slice(key).unwrap().decrypt_block(&mut b),
        24 => aes::Aes192::new_from_slice(key).unwrap().decrypt_block(&mut b),
        _ => aes::Aes256::new_from_slice(key).unwrap().decrypt_block(&mut b),
    }
    b.into()
}

proptest! {
    #[test]
    fn matches_reference_cipher(
        key_len in prop::sample::select(vec![16usize, 24, 32]),
        key in prop::collection::vec(any::<u8>(), 32),
        block in any::<[u8; 16]>(),
    ) {
        let key = &key[..key_len];
        let schedule = expand_key(key).unwrap();
        prop_assert_eq!(encrypt_block(&schedule, &block), oracle_encrypt(key, block));
        prop_assert_eq!(decrypt_block(&schedule, &block), oracle_decrypt(key, block));
    }
}
