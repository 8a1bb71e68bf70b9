//! Counter-based random numbers.
//!
//! Every draw is a pure function of a key and a counter, so a block's value
//! does not depend on which worker produced it or in which order.

use statrs::distribution::{ContinuousCDF, Normal};
use std::sync::OnceLock;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer. Bijective on `u64`.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a seed and a sequence of counters into 64 random bits.
#[inline]
pub fn hash_key(seed: u64, counters: &[u64]) -> u64 {
    let mut h = mix64(seed.wrapping_add(GOLDEN));
    for (i, &c) in counters.iter().enumerate() {
        h = mix64(h ^ mix64(c.wrapping_add(GOLDEN.wrapping_mul(i as u64 + 2))));
    }
    h
}

/// Uniform on the open interval (0, 1) from the top 52 bits, centred in
/// each of the 2^52 cells so neither endpoint is reachable.
#[inline]
pub fn to_open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

fn std_normal() -> &'static Normal {
    static N: OnceLock<Normal> = OnceLock::new();
    N.get_or_init(|| Normal::new(0.0, 1.0).expect("standard normal parameters are valid"))
}

/// Standard normal draw for `(seed, counters)`, via the inverse CDF.
#[inline]
pub fn normal(seed: u64, counters: &[u64]) -> f64 {
    std_normal().inverse_cdf(to_open_unit(hash_key(seed, counters)))
}

/// Seed of replication `rep` derived from a master seed.
pub fn derive_seed(master: u64, rep: u64) -> u64 {
    hash_key(master ^ 0x5EED_5EED_5EED_5EED, &[rep])
}
