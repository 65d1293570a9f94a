//! Seeded randomness.
//!
//! The generator is ChaCha8 (`rand_chacha`), seeded from a 64-bit value via
//! `SeedableRng::seed_from_u64`. Its output stream is specified independently
//! of platform and word size, which makes runs reproducible bit for bit.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numerics::tensor::{Real, Tensor};

pub const RNG_ALGORITHM: &str = "chacha8";

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn algorithm(&self) -> &'static str {
        RNG_ALGORITHM
    }

    /// Derive an independent stream, e.g. one per ablation row.
    pub fn fork(&mut self) -> Rng {
        Rng::new(self.next_u64())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    /// One draw from `[lo, hi)`.
    pub fn uniform_f64(&mut self, lo: f64, hi: f64) -> f64 {
        let u: f64 = self.inner.random();
        lo + (hi - lo) * u
    }

    pub fn normal_f64(&mut self, mean: f64, std: f64) -> f64 {
        if std == 0.0 {
            return mean;
        }
        Normal::new(mean, std)
            .expect("std checked positive")
            .sample(&mut self.inner)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        // Fisher-Yates, spelled out so the draw sequence is pinned here.
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn uniform<S: Real>(&mut self, lo: f64, hi: f64, shape: &[usize]) -> Result<Tensor<S>> {
        if !(lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "uniform needs lo < hi, got [{lo}, {hi})"
            )));
        }
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let v = S::of(self.uniform_f64(lo, hi));
                // rounding to f32 can land exactly on `hi`
                if v.as_f64() >= hi {
                    S::of(lo)
                } else {
                    v
                }
            })
            .collect();
        Tensor::new(shape, data)
    }

    pub fn normal<S: Real>(&mut self, mean: f64, std: f64, shape: &[usize]) -> Result<Tensor<S>> {
        if !(std >= 0.0) || !std.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "normal needs a finite std >= 0, got {std}"
            )));
        }
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| S::of(self.normal_f64(mean, std))).collect();
        Tensor::new(shape, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        let ta: Tensor<f32> = a.uniform(-1.0, 1.0, &[4, 5]).unwrap();
        let tb: Tensor<f32> = b.uniform(-1.0, 1.0, &[4, 5]).unwrap();
        assert_eq!(ta, tb);
        let na: Tensor<f64> = a.normal(0.0, 2.0, &[7]).unwrap();
        let nb: Tensor<f64> = b.normal(0.0, 2.0, &[7]).unwrap();
        assert_eq!(na, nb);
    }

    #[test]
    fn different_seeds_differ() {
        let ta: Tensor<f64> = Rng::new(1).uniform(0.0, 1.0, &[8]).unwrap();
        let tb: Tensor<f64> = Rng::new(2).uniform(0.0, 1.0, &[8]).unwrap();
        assert_ne!(ta, tb);
    }

    #[test]
    fn uniform_mean_converges() {
        let t: Tensor<f64> = Rng::new(7).uniform(0.0, 1.0, &[100_000]).unwrap();
        assert!((t.mean() - 0.5).abs() < 0.01);
        assert!(t.data().iter().all(|&v| (0.0..1.0).contains(&v)));
    }

    #[test]
    fn zero_std_normal_is_constant() {
        let t: Tensor<f64> = Rng::new(3).normal(0.0, 0.0, &[16]).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn preconditions() {
        assert!(Rng::new(0).uniform::<f64>(1.0, 1.0, &[2]).is_err());
        assert!(Rng::new(0).normal::<f64>(0.0, -1.0, &[2]).is_err());
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut v: Vec<usize> = (0..50).collect();
        Rng::new(9).shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(v, sorted);
    }
}
