//! Seed derivation and deterministic RNG construction.
//!
//! Every stochastic component takes an explicit u64 seed. Sub-streams are
//! derived with a splitmix64 step so that independent components never share
//! a stream even when the user passes small consecutive seeds.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive an independent sub-seed from a root seed and a stream tag.
pub fn subseed(root: u64, stream: u64) -> u64 {
    mix(root ^ mix(stream))
}

/// Derive a sub-seed from a root seed and several stream tags.
pub fn subseed_n(root: u64, streams: &[u64]) -> u64 {
    let mut s = root;
    for &t in streams {
        s = subseed(s, t);
    }
    s
}

/// Deterministic, platform-independent RNG for the given seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
