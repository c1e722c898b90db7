//! Seeded random streams.
//!
//! The generator is xoshiro256++ seeded through SplitMix64 from a single
//! 64-bit seed. Uniform doubles take the top 53 bits of each output, so a
//! given seed yields the same stream on every platform. Randomized pivoting
//! rules draw one uniform per sampling decision, in the order the algorithm
//! makes those decisions (row before column).

use rand::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::linalg::C64;

/// Identifier of the generator behind [`RngState`].
pub const RNG_ALGORITHM: &str = "xoshiro256++/splitmix64";

#[derive(Clone, Debug)]
pub struct RngState {
    seed: u64,
    inner: Xoshiro256PlusPlus,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform double in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Circularly-symmetric complex Gaussian with unit variance.
    pub fn complex_normal(&mut self) -> C64 {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        C64::new(self.normal() * s, self.normal() * s)
    }

    /// Index drawn with probability proportional to `weights`.
    pub fn sample_weighted(&mut self, weights: &[f64]) -> Option<usize> {
        let u = self.uniform();
        sample_weighted_with(weights, u)
    }

    /// Fisher-Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = ((self.uniform() * (i + 1) as f64) as usize).min(i);
            p.swap(i, j);
        }
        p
    }
}

/// Inverse-CDF draw from nonnegative weights using the uniform `u`.
///
/// Only strictly positive, finite weights carry mass, so an index with zero
/// weight is never returned. `None` when no weight is positive.
pub fn sample_weighted_with(weights: &[f64], u: f64) -> Option<usize> {
    let positive = |w: f64| w > 0.0 && w.is_finite();
    let total: f64 = weights.iter().copied().filter(|&w| positive(w)).sum();
    if total <= 0.0 {
        return None;
    }
    let target = u * total;
    let mut acc = 0.0;
    let mut last = None;
    for (i, &w) in weights.iter().enumerate() {
        if !positive(w) {
            continue;
        }
        acc += w;
        last = Some(i);
        if acc > target {
            return Some(i);
        }
    }
    last
}

/// Index of the largest value, ties resolved to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}
