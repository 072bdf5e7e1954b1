//! Seeded randomness for augmentation, with draw counters.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// A deterministic stream of standard-normal and uniform-index draws.
pub trait NoiseSource {
    /// One draw from N(0, 1).
    fn standard_normal(&mut self) -> f64;

    /// One draw from the uniform distribution on `0..n`. `n` must be positive.
    fn uniform_index(&mut self, n: usize) -> usize;

    /// Gaussian draws consumed so far.
    fn normal_draws(&self) -> u64;

    /// Index draws consumed so far.
    fn index_draws(&self) -> u64;
}

/// ChaCha8-backed [`NoiseSource`].
#[derive(Debug, Clone)]
pub struct SeededNoise {
    rng: ChaCha8Rng,
    normals: u64,
    indices: u64,
}

impl SeededNoise {
    pub fn new(seed: u64) -> Self {
        SeededNoise {
            rng: ChaCha8Rng::seed_from_u64(seed),
            normals: 0,
            indices: 0,
        }
    }

    /// A stream keyed by a master seed plus coordinates such as
    /// `(epoch, example index)`. Distinct keys give unrelated streams.
    pub fn keyed(seed: u64, key: &[u64]) -> Self {
        Self::new(derive_seed(seed, key))
    }
}

impl NoiseSource for SeededNoise {
    fn standard_normal(&mut self) -> f64 {
        self.normals += 1;
        self.rng.sample(StandardNormal)
    }

    fn uniform_index(&mut self, n: usize) -> usize {
        assert!(n > 0, "uniform_index needs a non-empty range");
        self.indices += 1;
        self.rng.random_range(0..n)
    }

    fn normal_draws(&self) -> u64 {
        self.normals
    }

    fn index_draws(&self) -> u64 {
        self.indices
    }
}

/// Replays fixed draws. Panics once a queue runs dry, which in a test means
/// the code under test consumed more randomness than expected.
#[derive(Debug, Clone, Default)]
pub struct ScriptedNoise {
    normals: VecDeque<f64>,
    indices: VecDeque<usize>,
    normal_count: u64,
    index_count: u64,
}

impl ScriptedNoise {
    pub fn new(normals: impl IntoIterator<Item = f64>, indices: impl IntoIterator<Item = usize>) -> Self {
        ScriptedNoise {
            normals: normals.into_iter().collect(),
            indices: indices.into_iter().collect(),
            ..Default::default()
        }
    }

    pub fn remaining_normals(&self) -> usize {
        self.normals.len()
    }
}

impl NoiseSource for ScriptedNoise {
    fn standard_normal(&mut self) -> f64 {
        self.normal_count += 1;
        self.normals.pop_front().expect("scripted normal draws exhausted")
    }

    fn uniform_index(&mut self, n: usize) -> usize {
        self.index_count += 1;
        let i = self.indices.pop_front().expect("scripted index draws exhausted");
        assert!(i < n, "scripted index {i} outside 0..{n}");
        i
    }

    fn normal_draws(&self) -> u64 {
        self.normal_count
    }

    fn index_draws(&self) -> u64 {
        self.index_count
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes a master seed with a key path into a 64-bit stream seed.
pub fn derive_seed(seed: u64, key: &[u64]) -> u64 {
    key.iter()
        .fold(splitmix64(seed), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}
