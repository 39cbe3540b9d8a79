//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a base seed mixed with a stream tag, so independent consumers
//! (initialization, shuffling, splitting) never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// splitmix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, stream: &str) -> u64 {
    let tag = stream.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    });
    mix(seed ^ mix(tag))
}

pub fn stream(seed: u64, stream: &str) -> Rng {
    Rng::seed_from_u64(derive(seed, stream))
}

pub fn stream_indexed(seed: u64, name: &str, index: u64) -> Rng {
    Rng::seed_from_u64(mix(derive(seed, name) ^ mix(index)))
}
