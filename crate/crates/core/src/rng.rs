//! Deterministic random streams.
//!
//! Every consumer of randomness asks for a stream keyed by `(seed, tag)`.
//! The stream seed is `splitmix64(seed ^ fnv1a64(tag))` and the generator is
//! ChaCha8, so independent purposes (shuffling, mixout masks, corpus
//! sampling) never share state and adding one cannot perturb another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over `bytes`, starting from `basis`.
pub fn fnv1a64_with(basis: u64, bytes: &[u8]) -> u64 {
    let mut h = basis;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    fnv1a64_with(FNV_OFFSET, bytes)
}

/// The splitmix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream_seed(seed: u64, tag: &str) -> u64 {
    splitmix64(seed ^ fnv1a64(tag.as_bytes()))
}

pub fn stream(seed: u64, tag: &str) -> StreamRng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, tag))
}
