//! Counter-based seeding.
//!
//! Every random stream is addressed by `(seed, stream)` so that sample chunks
//! can be generated in any order, on any thread, with identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Samples per independently seeded chunk.
pub const CHUNK: usize = 1024;

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a list of labels.
pub fn derive(seed: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(mix(seed), |acc, &l| mix(acc ^ mix(l)))
}

/// Generator for one chunk of a stream.
pub fn stream(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}
