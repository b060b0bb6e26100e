//! Table-free AES block cipher and key schedule.

use serde::{Deserialize, Serialize};

pub const BLOCK: usize = 16;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KeySize {
    Aes128,
    Aes192,
    Aes256,
}

impl KeySize {
    pub fn from_bits(bits: usize) -> Option<Self> {
        match bits {
            128 => Some(Self::Aes128),
            192 => Some(Self::Aes192),
            256 => Some(Self::Aes256),
            _ => None,
        }
    }

    pub fn bits(self) -> usize {
        self.key_bytes() * 8
    }

    pub fn key_bytes(self) -> usize {
        match self {
            Self::Aes128 => 16,
            Self::Aes192 => 24,
            Self::Aes256 => 32,
        }
    }

    pub fn rounds(self) -> usize {
        match self {
            Self::Aes128 => 10,
            Self::Aes192 => 12,
            Self::Aes256 => 14,
        }
    }

    /// Bytes in the expanded key, first round key included.
    pub fn schedule_bytes(self) -> usize {
        (self.rounds() + 1) * BLOCK
    }
}

const fn xtime(x: u8) -> u8 {
    (x << 1) ^ if x & 0x80 != 0 { 0x1b } else { 0 }
}

const fn gmul(mut a: u8, mut b: u8) -> u8 {
    let mut p = 0u8;
    while b != 0 {
        if b & 1 != 0 {
            p ^= a;
        }
        a = xtime(a);
        b >>= 1;
    }
    p
}

const fn build_sbox() -> [u8; 256] {
    let mut sbox = [0u8; 256];
    let mut x = 0usize;
    while x < 256 {
        // Multiplicative inverse by exhaustive search; 0 maps to 0.
        let mut inv = 0u8;
        if x != 0 {
            let mut y = 1usize;
            while y < 256 {
                if gmul(x as u8, y as u8) == 1 {
                    inv = y as u8;
                    break;
                }
                y += 1;
            }
        }
        let b = inv;
        let s = b ^ b.rotate_left(1) ^ b.rotate_left(2) ^ b.rotate_left(3) ^ b.rotate_left(4) ^ 0x63;
        sbox[x] = s;
        x += 1;
    }
    sbox
}

const fn invert(sbox: &[u8; 256]) -> [u8; 256] {
    let mut inv = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        inv[sbox[i] as usize] = i as u8;
        i += 1;
    }
    inv
}

pub const SBOX: [u8; 256] = build_sbox();
const INV_SBOX: [u8; 256] = invert(&SBOX);

/// Expand `key` into the full round-key sequence, laid out as it would be
/// in memory: round key 0 (the key itself) first.
///
/// Returns `None` for key lengths other than 16, 24 or 32 bytes.
pub fn expand_key(key: &[u8]) -> Option<Vec<u8>> {
    let size = KeySize::from_bits(key.len() * 8)?;
    let nk = key.len() / 4;
    let total_words = (size.rounds() + 1) * 4;
    let mut w: Vec<[u8; 4]> = key.chunks(4).map(|c| [c[0], c[1], c[2], c[3]]).collect();
    let mut rcon = 1u8;
    for i in nk..total_words {
        let mut t = w[i - 1];
        if i % nk == 0 {
            t = [SBOX[t[1] as usize], SBOX[t[2] as usize], SBOX[t[3] as usize], SBOX[t[0] as usize]];
            t[0] ^= rcon;
            rcon = xtime(rcon);
        } else if nk > 6 && i % nk == 4 {
            t = t.map(|b| SBOX[b as usize]);
        }
        let prev = w[i - nk];
        w.push([prev[0] ^ t[0], prev[1] ^ t[1], prev[2] ^ t[2], prev[3] ^ t[3]]);
    }
    Some(w.concat())
}

fn add_round_key(state: &mut [u8; BLOCK], rk: &[u8]) {
    for (s, k) in state.iter_mut().zip(rk) {
        *s ^= k;
    }
}

fn shift_rows(s: &mut [u8; BLOCK]) {
    let c = *s;
    for col in 0..4 {
        for row in 0..4 {
            s[col * 4 + row] = c[((col + row) % 4) * 4 + row];
        }
    }
}

fn inv_shift_rows(s: &mut [u8; BLOCK]) {
    let c = *s;
    for col in 0..4 {
        for row in 0..4 {
            s[((col + row) % 4) * 4 + row] = c[col * 4 + row];
        }
    }
}

fn mix_columns(s: &mut [u8; BLOCK], m: [u8; 4]) {
    for col in s.chunks_mut(4) {
        let a = [col[0], col[1], col[2], col[3]];
        for (row, out) in col.iter_mut().enumerate() {
            *out = gmul(a[0], m[(4 - row) % 4])
                ^ gmul(a[1], m[(5 - row) % 4])
                ^ gmul(a[2], m[(6 - row) % 4])
                ^ gmul(a[3], m[(7 - row) % 4]);
        }
    }
}

fn rounds_of(schedule: &[u8]) -> usize {
    let rounds = schedule.len() / BLOCK - 1;
    assert!(
        matches!(rounds, 10 | 12 | 14) && schedule.len().is_multiple_of(BLOCK),
        "bad key schedule length {}",
        schedule.len()
    );
    rounds
}

pub fn encrypt_block(schedule: &[u8], block: &[u8; BLOCK]) -> [u8; BLOCK] {
    let nr = rounds_of(schedule);
    let mut s = *block;
    add_round_key(&mut s, &schedule[..BLOCK]);
    for round in 1..=nr {
        s = s.map(|b| SBOX[b as usize]);
        shift_rows(&mut s);
        if round != nr {
            mix_columns(&mut s, [2, 3, 1, 1]);
        }
        add_round_key(&mut s, &schedule[round * BLOCK..(round + 1) * BLOCK]);
    }
    s
}

pub fn decrypt_block(schedule: &[u8], block: &[u8; BLOCK]) -> [u8; BLOCK] {
    let nr = rounds_of(schedule);
    let mut s = *block;
    add_round_key(&mut s, &schedule[nr * BLOCK..]);
    for round in (0..nr).rev() {
        inv_shift_rows(&mut s);
        s = s.map(|b| INV_SBOX[b as usize]);
        add_round_key(&mut s, &schedule[round * BLOCK..(round + 1) * BLOCK]);
        if round != 0 {
            mix_columns(&mut s, [14, 11, 13, 9]);
        }
    }
    s
}

/// ECB over whole blocks; a trailing partial block is left as is.
pub fn decrypt(schedule: &[u8], data: &[u8]) -> Vec<u8> {
    let mut out = data.to_vec();
    for chunk in out.chunks_exact_mut(BLOCK) {
        let b: [u8; BLOCK] = (&*chunk).try_into().unwrap();
        chunk.copy_from_slice(&decrypt_block(schedule, &b));
    }
    out
}

pub fn encrypt(schedule: &[u8], data: &[u8]) -> Vec<u8> {
    let mut out = data.to_vec();
    for chunk in out.chunks_exact_mut(BLOCK) {
        let b: [u8; BLOCK] = (&*chunk).try_into().unwrap();
        chunk.copy_from_slice(&encrypt_block(schedule, &b));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(s: &str) -> Vec<u8> {
        hex::decode(s).unwrap()
    }

    #[test]
    fn sbox_spot_values() {
        assert_eq!(SBOX[0x00], 0x63);
        assert_eq!(SBOX[0x53], 0xed);
        assert_eq!(INV_SBOX[0x63], 0x00);
    }

    #[test]
    fn key_expansion_128_vector() {
        let rk = expand_key(&h("2b7e151628aed2a6abf7158809cf4f3c")).unwrap();
        assert_eq!(rk.len(), 176);
        assert_eq!(hex::encode(&rk[16..20]), "a0fafe17");
        assert_eq!(hex::encode(&rk[172..]), "b6630ca6");
    }

    #[test]
    fn key_expansion_192_and_256_vectors() {
        let rk = expand_key(&h("8e73b0f7da0e6452c810f32b809079e562f8ead2522c6b7b")).unwrap();
        assert_eq!(rk.len(), 208);
        assert_eq!(hex::encode(&rk[204..]), "01002202");
        let rk = expand_key(&h("603deb1015ca71be2b73aef0857d77811f352c073b6108d72d9810a30914dff4")).unwrap();
        assert_eq!(rk.len(), 240);
        assert_eq!(hex::encode(&rk[236..]), "706c631e");
    }

    #[test]
    fn cipher_vectors() {
        let pt: [u8; 16] = h("00112233445566778899aabbccddeeff").try_into().unwrap();
        for (key, ct) in [
            ("000102030405060708090a0b0c0d0e0f", "69c4e0d86a7b0430d8cdb78070b4c55a"),
            ("000102030405060708090a0b0c0d0e0f1011121314151617", "dda97ca4864cdfe06eaf70a0ec0d7191"),
            (
                "000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f",
                "8ea2b7ca516745bfeafc49904b496089",
            ),
        ] {
            let rk = expand_key(&h(key)).unwrap();
            let c = encrypt_block(&rk, &pt);
            assert_eq!(hex::encode(c), ct);
            assert_eq!(decrypt_block(&rk, &c), pt);
        }
    }

    #[test]
    fn rejects_odd_key_lengths() {
        assert!(expand_key(&[0u8; 20]).is_none());
    }
}
