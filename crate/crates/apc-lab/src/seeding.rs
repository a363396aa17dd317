//! Deterministic seed derivation.
//!
//! Every random stream in the crate is derived from a single master seed by
//! a splittable counter scheme: `derive_seed(master, stream, counter)` mixes
//! the master seed, a textual stream tag, and a counter through a
//! splitmix64-style finalizer. Identical inputs give identical seeds on all
//! platforms; distinct (stream, counter) pairs give independent streams for
//! all practical purposes.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; good avalanche, stable across platforms.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `master` for the given stream tag and counter.
pub fn derive_seed(master: u64, stream: &str, counter: u64) -> u64 {
    let mut h = mix(master);
    for &b in stream.as_bytes() {
        h = mix(h ^ u64::from(b));
    }
    mix(h ^ counter)
}

/// A seeded RNG for the given (master, stream, counter) triple.
pub fn rng_from(master: u64, stream: &str, counter: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, counter))
}
