//! Seed derivation and counter-based randomness.
//!
//! Every random stream in the harness is derived from the global seed by
//! [`mix`], so streams for different devices, sensors, or clients are
//! independent of each other and of the order in which they are created.
//! Values that must not depend on call order (sensor noise, random-range
//! samples, interval jitter) are pure functions of `(stream seed, counter)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combine a parent seed with one more coordinate. Not commutative, so
/// `mix(mix(s, a), b)` and `mix(mix(s, b), a)` name different streams.
pub fn mix(parent: u64, coordinate: u64) -> u64 {
    splitmix64(parent ^ splitmix64(coordinate.wrapping_mul(GOLDEN_GAMMA) ^ 0x6a09_e667_f3bc_c909))
}

/// Domain tags keep streams for different purposes apart.
pub mod tag {
    pub const DISTRIBUTION_SHUFFLE: u64 = 1;
    pub const SENSOR_PARAMS: u64 = 2;
    pub const SENSOR_NOISE: u64 = 3;
    pub const SENSOR_RANDOM: u64 = 4;
    pub const TIMESTAMP: u64 = 5;
    pub const JITTER: u64 = 6;
    pub const QUERY: u64 = 7;
}

/// A seeded sequential stream.
pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform in `[0, 1)` with 53 bits of precision, a pure function of its inputs.
pub fn unit_at(seed: u64, counter: u64) -> f64 {
    to_unit(mix(seed, counter))
}

/// Map 64 random bits onto `[0, 1)`.
pub fn to_unit(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal deviate for `(seed, counter)` via Box-Muller on two
/// counter-derived uniforms.
pub fn std_normal_at(seed: u64, counter: u64) -> f64 {
    let base = mix(seed, counter);
    // 1 - u keeps the log argument in (0, 1]
    let u1 = 1.0 - to_unit(splitmix64(base));
    let u2 = to_unit(splitmix64(base ^ 0xa5a5_a5a5_a5a5_a5a5));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_range() {
        for c in 0..10_000 {
            let u = unit_at(42, c);
            assert!((0.0..1.0).contains(&u));
        }
        assert_eq!(to_unit(u64::MAX), 1.0 - f64::EPSILON / 2.0);
    }

    #[test]
    fn mix_is_order_sensitive() {
        assert_ne!(mix(mix(7, 1), 2), mix(mix(7, 2), 1));
        assert_eq!(mix(mix(7, 1), 2), mix(mix(7, 1), 2));
    }
}
