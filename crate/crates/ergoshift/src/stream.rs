//! Counter-based random streams.
//!
//! Every draw is addressed by a key `(seed, index, channel, draw)` and hashed
//! through a splitmix64-style finalizer, so any coordinate of any stream can
//! be re-materialized in O(1) without replaying earlier draws. Negative
//! indices are first-class: the shift has to reach arbitrarily far back.

use statrs::distribution::{ContinuousCDF, Normal};

const C1: u64 = 0x9e37_79b9_7f4a_7c15;
const C2: u64 = 0xc2b2_ae3d_27d4_eb4f;
const C3: u64 = 0x1656_67b1_9e37_79f9;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64 uniform bits at an addressed point of the stream.
#[inline]
pub fn bits_at(seed: u64, index: i64, channel: u64, draw: u64) -> u64 {
    let mut h = mix(seed.wrapping_add(C1));
    h = mix(h ^ (index as u64).wrapping_mul(C1));
    h = mix(h ^ channel.wrapping_mul(C2));
    mix(h ^ draw.wrapping_mul(C3))
}

/// Uniform in [0, 1).
#[inline]
pub fn uniform_at(seed: u64, index: i64, channel: u64, draw: u64) -> f64 {
    (bits_at(seed, index, channel, draw) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in the open interval (0, 1); safe as an inverse-CDF argument.
#[inline]
pub fn open_uniform_at(seed: u64, index: i64, channel: u64, draw: u64) -> f64 {
    ((bits_at(seed, index, channel, draw) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard Gaussian via inverse CDF, keeping the one-key-one-draw discipline.
#[inline]
pub fn gaussian_at(seed: u64, index: i64, channel: u64, draw: u64) -> f64 {
    let u = open_uniform_at(seed, index, channel, draw);
    Normal::standard().inverse_cdf(u)
}

/// Derives a child seed; used to hand disjoint streams to replications.
#[inline]
pub fn child_seed(seed: u64, branch: u64) -> u64 {
    mix(mix(seed.wrapping_add(C2)) ^ branch.wrapping_mul(C1))
}
