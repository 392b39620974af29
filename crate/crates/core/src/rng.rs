//! Seeded randomness.
//!
//! Every stream in the crate comes from xoshiro256** seeded through splitmix64
//! (`rand_xoshiro::Xoshiro256StarStar::seed_from_u64`). Changing the generator
//! changes every stored world and checkpoint, so it is fixed together with the
//! file format version.

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256StarStar;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const ALGORITHM: &str = "xoshiro256** (splitmix64 seeding)";

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: Xoshiro256StarStar,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream; consumes one draw from `self`.
    pub fn fork(&mut self) -> Rng {
        Rng::new(self.inner.next_u64())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn gaussian<T: Scalar>(&mut self, mean: T, std: T) -> T {
        let z: f64 = StandardNormal.sample(&mut self.inner);
        mean + std * T::of(z)
    }

    /// `n` independent draws from N(mean, std²).
    pub fn gaussian_vec<T: Scalar>(&mut self, n: usize, mean: T, std: T) -> Result<Vec<T>> {
        if !(std >= T::zero()) || !std.is_finite() {
            return Err(Error::Parameter(format!(
                "standard deviation must be finite and non-negative, got {std}"
            )));
        }
        Ok((0..n).map(|_| self.gaussian(mean, std)).collect())
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform index in `0..n`; `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<X>(&mut self, items: &mut [X]) {
        items.shuffle(&mut self.inner);
    }
}
