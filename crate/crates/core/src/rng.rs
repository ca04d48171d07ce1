//! Seeded random streams.
//!
//! Every replicate draws from its own ChaCha8 stream selected by
//! `(seed, replicate)`, so a batch gives the same numbers whether it runs
//! serially or on a thread pool.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for replicate `replicate` of the experiment seeded by `seed`.
pub fn stream(seed: u64, replicate: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// Derives an independent seed for a named sub-experiment.
///
/// Used when one experiment runs several independent batches (for example one
/// per parameter set) that must not share streams.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
