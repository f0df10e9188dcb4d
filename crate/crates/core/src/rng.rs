//! Seeded random streams.
//!
//! Every stochastic component draws from a named sub-stream of a single run
//! seed, so any one of them (data synthesis, weight init, shuffling, splits)
//! can be replayed in isolation.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Rng = Xoshiro256PlusPlus;

/// Named sub-streams used across the crate.
pub mod stream {
    pub const DATA: &str = "data";
    pub const INIT: &str = "init";
    pub const SHUFFLE: &str = "shuffle";
    pub const SPLIT: &str = "split";
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the 64-bit seed of sub-stream `name` from the run seed.
pub fn substream_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a over the stream name, then mixed with the run seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(seed ^ splitmix64(h))
}

pub fn substream(seed: u64, name: &str) -> Rng {
    Rng::seed_from_u64(substream_seed(seed, name))
}

pub fn from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
