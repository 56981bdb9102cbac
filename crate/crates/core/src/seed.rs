//! Seed derivation.
//!
//! Every random draw in the crate comes from a ChaCha stream whose seed is
//! derived from a user seed plus a small tuple of stream identifiers, so that
//! independent consumers never share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Kept distinct so two consumers fed the same user seed draw
/// independent numbers.
pub mod stream {
    pub const SPLIT: u64 = 0x5350_4c49;
    pub const SAMPLE: u64 = 0x5341_4d50;
    pub const SYNTH: u64 = 0x5359_4e54;
    pub const EP_PAIRS: u64 = 0x4550_5052;
    pub const KB_NODES: u64 = 0x4b42_4e44;
    pub const INIT: u64 = 0x494e_4954;
    pub const DROPOUT: u64 = 0x4452_4f50;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, parts))
}
