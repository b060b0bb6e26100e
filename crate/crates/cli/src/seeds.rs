//! Every random choice in an experiment hangs off the master seed through
//! a labelled stream, so adding a draw in one place does not shift another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub mod stream {
    pub const SECRET: u64 = 1;
    pub const MACHINE: u64 = 2;
    pub const OFFLINE: u64 = 3;
    pub const BOOT: u64 = 4;
    pub const PAGE: u64 = 5;
}

pub fn rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream << 32 | index);
    r
}

pub fn derive(seed: u64, stream: u64, index: u64) -> u64 {
    use rand::RngCore;
    rng(seed, stream, index).next_u64()
}
