//! Seed derivation. Every random stream in the crate is a `ChaCha8Rng`
//! keyed by a master seed mixed with a path of integer tags, so a stream
//! depends only on *where* it is used, never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags, kept distinct so unrelated streams never share a key.
pub mod tag {
    pub const FOLDS: u64 = 1;
    pub const UNLABELED: u64 = 2;
    pub const ORDER: u64 = 3;
    pub const INIT: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const MASK: u64 = 6;
    pub const VALIDATION: u64 = 7;
    pub const SPLIT: u64 = 8;
    pub const FOLD_SEED: u64 = 9;
    pub const PROBE: u64 = 10;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a master seed with a path of tags into a new 64-bit seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}
