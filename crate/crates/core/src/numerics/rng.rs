//! Seeded randomness.
//!
//! The generator is ChaCha8 (`rand_chacha`), seeded through `seed_from_u64`.
//! Both are specified algorithms with no platform-dependent state, so a seed
//! reproduces the same stream everywhere. Gaussian draws use the Box–Muller
//! transform on top of the uniform stream.
//!
//! Every random decision in a training run comes from a substream keyed by
//! `(seed, domain, counters...)`, so the draws for sample `t` never depend on
//! how many draws earlier samples consumed. This is what lets a checkpoint
//! resume bit-exactly from counters alone.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A single-owner pseudorandom stream.
#[derive(Clone, Debug)]
pub struct Rng {
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    /// Independent substream identified by `keys` under a run seed.
    pub fn substream(seed: u64, keys: &[u64]) -> Self {
        Self::new(stream(seed, keys))
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Standard normal draw (Box–Muller, both variates used).
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // 1 - u keeps the logarithm argument in (0, 1].
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        self.inner.gen_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of the substream `keys` under `seed`.
pub fn stream(seed: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(mix(seed), |acc, &k| mix(acc ^ mix(k.wrapping_add(0x632b_e59b_d9b4_e019))))
}
