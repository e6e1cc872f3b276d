//! Seed derivation. Every random stream in the toolkit is a ChaCha generator
//! keyed by a user seed plus a purpose tag, so independent consumers never
//! share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer applied to `seed ^ tag`-style combinations.
pub fn mix(seed: u64, tag: u64) -> u64 {
    let mut z = seed
        .wrapping_add(tag.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub mod tag {
    pub const CWP: u64 = 1;
    pub const DUP: u64 = 2;
    pub const MASK: u64 = 3;
    pub const INIT: u64 = 4;
    pub const DROPOUT: u64 = 5;
    pub const SHUFFLE: u64 = 6;
    pub const OUTLIER: u64 = 7;
    pub const SKIPGRAM: u64 = 8;
    pub const DEMO: u64 = 9;
}

/// Generator for `(seed, purpose)`; `stream` separates parallel workers.
pub fn rng(seed: u64, purpose: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(mix(seed, purpose));
    r.set_stream(stream);
    r
}
