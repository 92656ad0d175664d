//! Counter-based integer hashing.
//!
//! Every pseudo-random quantity in the crate is a pure function of a seed and
//! a position key, so results do not depend on evaluation order or thread
//! count and are identical on every platform.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a seed together with an ordered list of keys.
#[inline]
pub fn hash_keys(seed: u64, keys: &[u64]) -> u64 {
    let mut h = mix64(seed.wrapping_add(GOLDEN));
    for &k in keys {
        h = mix64(h ^ k.wrapping_add(GOLDEN).wrapping_add(h << 6).wrapping_add(h >> 2));
    }
    h
}

/// Maps a hash to a uniform value in `[0, 1)` using its top 53 bits.
#[inline]
pub fn unit_f64(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform value in `[0, 1)` for `(seed, keys)`.
#[inline]
pub fn uniform(seed: u64, keys: &[u64]) -> f64 {
    unit_f64(hash_keys(seed, keys))
}

/// Approximately standard normal deviate for `(seed, keys)`: the Irwin-Hall
/// sum of twelve hashed uniforms, recentred. Only additions are involved, so
/// the value is bit-identical on every platform. Tails are bounded at 6.
pub fn approx_normal(seed: u64, keys: &[u64]) -> f64 {
    let base = hash_keys(seed, keys);
    let mut sum = 0.0;
    for j in 0..12u64 {
        sum += unit_f64(mix64(base ^ j.wrapping_mul(GOLDEN)));
    }
    sum - 6.0
}
