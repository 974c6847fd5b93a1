//! Seeded random streams.
//!
//! Every randomized routine takes a caller-supplied generator. Reproducible
//! runs use [`DetRng`], which is ChaCha8 (as implemented by `rand_chacha`):
//! a 64-bit seed expanded to the 256-bit key, plus a 64-bit stream id. The
//! cipher is portable, so a `(seed, stream)` pair names the same sequence on
//! every platform and can be reproduced from any ChaCha8 implementation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type DetRng = ChaCha8Rng;

/// Generator for `seed` on stream 0.
pub fn seeded(seed: u64) -> DetRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for `seed` on an explicit stream. Distinct streams of one seed
/// are independent.
pub fn stream(seed: u64, stream: u64) -> DetRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer, used to derive child seeds from a parent seed and a
/// sequence of integer labels.
pub fn mix(seed: u64, label: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(label.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(seed, |acc, &l| mix(acc, l))
}
