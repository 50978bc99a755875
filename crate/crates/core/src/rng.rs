//! Seeding conventions. Every random draw in the pipeline comes from a ChaCha
//! stream derived from `(base_seed, index)` so results never depend on
//! scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Per-sample generator: seed `base + index`, as used for fields and noise.
pub fn sample_rng(base_seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(index))
}

/// Independent stream `stream` of the per-sample generator.
pub fn sample_stream(base_seed: u64, index: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = sample_rng(base_seed, index);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer, used to derive well-separated seeds from counters.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
