//! Deterministic seed derivation.
//!
//! A single user-facing run seed fans out into independent streams (weight
//! init, epoch shuffling, outlier injection, search trials). Mixing the seed
//! with a role label keeps the streams uncorrelated while staying fully
//! reproducible.

/// SplitMix64 finalizer (Steele et al.), the usual mixer for seed material.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a sub-seed for `label` from a run seed.
///
/// Same `(seed, label)` always yields the same value; different labels give
/// unrelated streams.
pub fn derive(seed: u64, label: &str) -> u64 {
    let mut h = splitmix64(seed);
    for &b in label.as_bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    h
}
