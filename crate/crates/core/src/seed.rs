//! Seed derivation for reproducible, independent random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `SplitMix64` finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of stream `index` from `master`.
///
/// Distinct `(master, index)` pairs give statistically independent seeds;
/// repetition `r` of an experiment uses `derive(master, r)`.
#[inline]
pub fn derive(master: u64, index: u64) -> u64 {
    mix64(mix64(master) ^ mix64(index.wrapping_add(0xD1B5_4A32_D192_ED03)))
}

/// Named sub-streams so that two consumers of one seed never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    SomInit = 1,
    SomOrder = 2,
    LabelSubset = 3,
    Extractor = 4,
    Validation = 5,
}

#[inline]
pub fn stream(seed: u64, stream: Stream) -> u64 {
    derive(seed, 0xA076_1D64_78BD_642F ^ stream as u64)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
