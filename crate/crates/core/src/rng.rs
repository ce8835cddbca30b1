//! Seed derivation. Every stochastic stage draws from a ChaCha stream keyed by
//! `(seed, stream, index)` so results never depend on call order or threading.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    mix(mix(seed ^ mix(stream)) ^ index)
}

pub fn rng_from(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(seed: u64, stream: u64, index: u64) -> Rng {
    rng_from(derive_seed(seed, stream, index))
}

pub fn normal_vec(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

// Stream tags.
pub(crate) const STREAM_SCORE_TRAIN: u64 = 1;
pub(crate) const STREAM_PROXY_TRAIN: u64 = 2;
pub(crate) const STREAM_REFINE_TRAIN: u64 = 3;
pub(crate) const STREAM_REFINE_VAL: u64 = 4;
pub(crate) const STREAM_REFINE_KL: u64 = 5;
pub(crate) const STREAM_INIT: u64 = 6;
pub(crate) const STREAM_HUTCHINSON: u64 = 7;
