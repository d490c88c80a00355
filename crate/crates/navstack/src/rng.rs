//! Deterministic randomness for the synthetic world.
//!
//! Every stochastic quantity is drawn from a stream derived from one root
//! seed: runtime noise comes from per-stream ChaCha8 generators, while static
//! procedural content (the ground texture) is addressed by hashing integer
//! coordinates so it can be evaluated in any order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Substream identifiers; keeping them in one place avoids collisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Dynamics = 1,
    Imu = 2,
    Gps = 3,
    Scenario = 4,
}

/// ChaCha8 generator bound to (seed, stream).
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// SplitMix64 of a key; stateless hash used for procedural content.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Hash of (seed, a, b, salt) into a uniform f64 in [0, 1).
pub fn hash01(seed: u64, a: i64, b: i64, salt: u64) -> f64 {
    let mut h = splitmix64(seed ^ 0x5851f42d4c957f2d);
    h = splitmix64(h ^ (a as u64));
    h = splitmix64(h ^ (b as u64).rotate_left(17));
    h = splitmix64(h ^ salt);
    (h >> 11) as f64 / (1u64 << 53) as f64
}
