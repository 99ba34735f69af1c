//! Seeded random streams.
//!
//! Every consumer of randomness draws from its own ChaCha stream derived from
//! the run seed, so adding a consumer never perturbs the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream identifiers. Values are part of the reproducibility contract.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const PREDICTOR_INIT: u64 = 2;
    pub const CLUSTER_MAP: u64 = 3;
    pub const EXPLORE: u64 = 4;
    pub const REPLAY: u64 = 5;
    pub const KMEANS: u64 = 6;
    pub const NOISE: u64 = 7;
    pub const BATCH: u64 = 8;
    pub const FLOW: u64 = 9;
    pub const AUGMENT: u64 = 10;
    pub const WARMUP: u64 = 11;
}

pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A stream further split by an index (flow id, episode number, ...).
pub fn derived(seed: u64, stream: u64, index: u64) -> Rng {
    let mixed = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03))
        ^ index.rotate_left(29);
    seeded(mixed, stream)
}
