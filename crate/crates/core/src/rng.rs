//! Counter-based random streams.
//!
//! Every stochastic step draws from a ChaCha8 stream addressed by a
//! `(seed, stream)` pair, so a candidate's randomness does not depend on
//! which worker thread produced it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Folds a list of integers into one seed: `h = splitmix64(h ^ part)` for
/// each part, starting from `h = 0`.
pub fn mix_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0u64, |h, &p| splitmix64(h ^ p))
}

/// Independent stream `stream` of the generator keyed by `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream id for `(iteration, slot)`; iteration 0 is reserved for initialization.
pub fn stream_id(iteration: u64, slot: u64) -> u64 {
    (iteration << 32) | (slot & 0xFFFF_FFFF)
}
