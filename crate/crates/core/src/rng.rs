//! Keyed, splittable random streams.
//!
//! A run is seeded once. Every consumer (graph realization, packet loss, data
//! generation) derives its own stream by tag, and per-round draws are keyed by
//! `(round, from, to)` so a round's randomness never depends on how many draws
//! earlier rounds made.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedStream {
    key: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { key: mix64(seed) }
    }

    /// Child stream, independent of the parent and of siblings with other tags.
    pub fn derive(&self, tag: &str) -> Self {
        let mut key = self.key;
        for b in tag.bytes() {
            key = mix64(key ^ u64::from(b));
        }
        Self {
            key: mix64(key ^ 0xA5A5_A5A5_5A5A_5A5A),
        }
    }

    /// Child stream keyed by an integer (e.g. a seed index in a sweep).
    pub fn derive_index(&self, index: u64) -> Self {
        Self {
            key: mix64(self.key ^ mix64(index.wrapping_add(0x5851_F42D_4C95_7F2D))),
        }
    }

    /// Uniform draw in `[0, 1)` keyed by `(round, a, b)`.
    pub fn unit(&self, round: u64, a: u64, b: u64) -> f64 {
        let h = mix64(mix64(mix64(self.key ^ round) ^ a) ^ b);
        // 53 high bits -> [0, 1)
        (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Bernoulli(p) keyed by `(round, a, b)`. `p <= 0` never fires and `p >= 1` always fires.
    pub fn bernoulli(&self, p: f64, round: u64, a: u64, b: u64) -> bool {
        self.unit(round, a, b) < p
    }

    /// A sequential generator for bulk draws (data generation, shuffles).
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.key)
    }
}
