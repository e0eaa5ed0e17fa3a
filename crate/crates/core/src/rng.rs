//! Keyed random substreams.
//!
//! Every draw belongs to a substream identified by `(seed, round, role)`. The
//! substream is a ChaCha20 keystream whose 256-bit key is the little-endian
//! concatenation of those three words and [`RNG_VERSION`]; output is a pure
//! function of the key and the position in the keystream, so adding draws to
//! one role never shifts another role's values.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

/// Bumped whenever the mapping from key to draws changes.
pub const RNG_VERSION: u64 = 1;

pub const RNG_NAME: &str = "chacha20-keyed-v1";

/// Named draw roles. Values are part of the key and must never be reused.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Role {
    DesignMatrix = 1,
    Targets = 2,
    ConstraintMatrix = 3,
    ConstraintOffset = 4,
    ThetaDrift = 5,
    ThetaRegime = 6,
    SignPermutation = 7,
    PriceBase = 8,
    PriceNoise = 9,
    Arrivals = 10,
    SolverRestart = 11,
    Probe = 12,
    ThetaFixed = 13,
}

pub struct Substream {
    inner: ChaCha20Rng,
}

impl Substream {
    pub fn new(seed: u64, round: u64, role: Role) -> Self {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&round.to_le_bytes());
        key[16..24].copy_from_slice(&(role as u64).to_le_bytes());
        key[24..32].copy_from_slice(&RNG_VERSION.to_le_bytes());
        Substream {
            inner: ChaCha20Rng::from_seed(key),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn unit(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on the half-open interval `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let v = lo + (hi - lo) * self.unit();
        if v >= hi && hi > lo {
            // rounding can land on hi; step back to the largest value below it
            f64::from_bits(hi.to_bits() - 1).max(lo)
        } else {
            v
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Poisson draw by inversion over the pmf table truncated to
    /// `mean +- 12 sqrt(mean)` (tail mass below 1e-30 for large means).
    pub fn poisson(&mut self, mean: f64) -> u64 {
        assert!(mean > 0.0 && mean.is_finite(), "poisson mean must be positive");
        let mode = mean.floor();
        let spread = 12.0 * mean.sqrt() + 12.0;
        let lo = (mode - spread).max(0.0) as u64;
        let hi = (mode + spread) as u64;
        let m = mode as u64;
        // unnormalized weights relative to the mode via p(k+1)/p(k) = mean/(k+1)
        let len = (hi - lo + 1) as usize;
        let mut w = vec![0.0; len];
        let mi = (m - lo) as usize;
        w[mi] = 1.0;
        for k in (m + 1)..=hi {
            let i = (k - lo) as usize;
            w[i] = w[i - 1] * mean / k as f64;
        }
        for k in (lo..m).rev() {
            let i = (k - lo) as usize;
            w[i] = w[i + 1] * (k + 1) as f64 / mean;
        }
        let total: f64 = w.iter().sum();
        let u = self.unit() * total;
        let mut acc = 0.0;
        for (i, wi) in w.iter().enumerate() {
            acc += wi;
            if u < acc {
                return lo + i as u64;
            }
        }
        hi
    }

    /// Uniformly random permutation of `0..n` (Fisher-Yates driven by this substream).
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut v: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = (self.next_u64() % (i as u64 + 1)) as usize;
            v.swap(i, j);
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4)
            .map({
                let mut s = Substream::new(7, 3, Role::DesignMatrix);
                move |_| s.next_u64()
            })
            .collect();
        let b: Vec<u64> = (0..4)
            .map({
                let mut s = Substream::new(7, 3, Role::DesignMatrix);
                move |_| s.next_u64()
            })
            .collect();
        assert_eq!(a, b);
        let mut c = Substream::new(7, 3, Role::Targets);
        assert_ne!(a[0], c.next_u64());
        let mut d = Substream::new(7, 4, Role::DesignMatrix);
        assert_ne!(a[0], d.next_u64());
    }

    #[test]
    fn uniform_is_half_open() {
        let mut s = Substream::new(0, 0, Role::Probe);
        for _ in 0..10_000 {
            let v = s.uniform(-1.0, 1.0);
            assert!((-1.0..1.0).contains(&v));
        }
    }

    #[test]
    fn poisson_moments() {
        let mut s = Substream::new(1, 0, Role::Arrivals);
        let n = 4000;
        let draws: Vec<f64> = (0..n).map(|_| s.poisson(2500.0) as f64).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // standard error of the mean is 50/sqrt(4000) ~ 0.8
        assert!((mean - 2500.0).abs() < 4.0, "mean {mean}");
        assert!((var / 2500.0 - 1.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn poisson_small_mean_matches_pmf() {
        let mut s = Substream::new(2, 0, Role::Arrivals);
        let n = 20000;
        let zeros = (0..n).filter(|_| s.poisson(1.0) == 0).count();
        let p0 = (-1.0f64).exp();
        assert!((zeros as f64 / n as f64 - p0).abs() < 0.015);
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut s = Substream::new(0, 0, Role::SignPermutation);
        let mut p = s.permutation(5000);
        p.sort_unstable();
        assert!(p.iter().enumerate().all(|(i, v)| i == *v));
    }
}
