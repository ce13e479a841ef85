//! Seed derivation. Every episode gets its own ChaCha8 stream derived from
//! the root seed and a stream index, so results do not depend on which
//! worker runs which episode.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, stream: u64) -> u64 {
    splitmix64(root ^ splitmix64(stream))
}

/// Named stream families.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const EVAL: u64 = 3;
    pub const THEORY: u64 = 4;
    pub const MINIBATCH: u64 = 5;
}

/// Seeds for `count` episodes of a stream family and sub-index.
pub fn episode_seeds(root: u64, family: u64, index: u64, count: usize) -> Vec<u64> {
    let base = derive_seed(derive_seed(root, family), index);
    (0..count as u64).map(|e| derive_seed(base, e)).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
