//! Seeded random streams keyed by where they are used, so sampling does not
//! depend on exploration order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RngStream = ChaCha8Rng;

/// Purpose of a stream, mixed into its key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Phase {
    Forward = 1,
    Backward = 2,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive 64-bit mix of `words`.
pub fn mix(seed: u64, words: impl IntoIterator<Item = u64>) -> u64 {
    words
        .into_iter()
        .fold(splitmix64(seed), |h, w| splitmix64(h ^ splitmix64(w)))
}

pub fn stream(seed: u64, words: impl IntoIterator<Item = u64>) -> RngStream {
    RngStream::seed_from_u64(mix(seed, words))
}
