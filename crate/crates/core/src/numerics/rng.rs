//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator (`rand_chacha::ChaCha8Rng`) keyed by a
//! 64-bit seed. Child streams are derived with [`derive_seed`], a SplitMix64
//! finaliser applied to the parent seed and a stream label, so a single run
//! seed fans out into independent per-worker streams without sharing state.

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{PcnnError, Result};
use crate::numerics::Matrix;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the child stream `stream` of `parent`.
pub fn derive_seed(parent: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ splitmix64(stream.wrapping_mul(GOLDEN_GAMMA) ^ 0xA076_1D64_78BD_642F))
}

/// Stream labels used when fanning one seed out over the pipeline stages.
pub mod streams {
    pub const PARTITION: u64 = 1;
    pub const SUBPATTERN: u64 = 2;
    pub const CLASSIFIER: u64 = 3;
    pub const DATA: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const TRIAL: u64 = 6;
    pub const MODEL: u64 = 7;
    pub const SWEEP: u64 = 8;
}

/// Single-owner reproducible random stream.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream derived from this stream's seed (not its position).
    pub fn child(&self, stream: u64) -> Rng {
        Rng::new(derive_seed(self.seed, stream))
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random::<u64>()
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    /// Uniformly random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }

    pub(crate) fn chi_squared(&mut self, dist: &ChiSquared<f64>) -> f64 {
        dist.sample(&mut self.inner)
    }
}

/// One draw from `[lo, hi)`.
pub fn sample_uniform(rng: &mut Rng, lo: f64, hi: f64) -> Result<f64> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(PcnnError::InvalidArgument(format!(
            "uniform interval requires lo < hi, got [{lo}, {hi})"
        )));
    }
    let v = lo + (hi - lo) * rng.next_f64();
    // Rounding can land exactly on `hi` for tiny intervals.
    Ok(if v >= hi { lo } else { v })
}

/// `n` standard-normal draws as an `n x 1` column.
pub fn sample_gaussian(rng: &mut Rng, n: usize) -> Result<Matrix> {
    if n == 0 {
        return Err(PcnnError::InvalidArgument("sample count must be >= 1".into()));
    }
    let data = (0..n).map(|_| rng.normal()).collect();
    Ok(Matrix::from_raw(n, 1, data))
}

/// `n` Student-t draws with `nu` degrees of freedom, built as
/// `Z / sqrt(V / nu)` with `Z ~ N(0,1)` and `V ~ chi2(nu)`.
pub fn sample_student_t(rng: &mut Rng, nu: f64, n: usize) -> Result<Matrix> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(PcnnError::InvalidArgument(format!(
            "degrees of freedom must be positive, got {nu}"
        )));
    }
    if n == 0 {
        return Err(PcnnError::InvalidArgument("sample count must be >= 1".into()));
    }
    let chi = ChiSquared::new(nu).map_err(|e| PcnnError::InvalidArgument(e.to_string()))?;
    let mut data = Vec::with_capacity(n);
    while data.len() < n {
        let z = rng.normal();
        let v = rng.chi_squared(&chi);
        // A chi-square draw of exactly zero (possible only for tiny nu) has no finite ratio.
        if v > 0.0 {
            data.push(z / (v / nu).sqrt());
        }
    }
    Ok(Matrix::from_raw(n, 1, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn uniform_is_deterministic_and_in_range() {
        let a = sample_uniform(&mut Rng::new(11), 0.0, 1.0).unwrap();
        let b = sample_uniform(&mut Rng::new(11), 0.0, 1.0).unwrap();
        assert_eq!(a, b);
        let mut rng = Rng::new(3);
        for _ in 0..1000 {
            let v = sample_uniform(&mut rng, 0.25, 0.5).unwrap();
            assert!((0.25..0.5).contains(&v));
        }
    }

    #[test]
    fn uniform_rejects_empty_interval() {
        let mut rng = Rng::new(0);
        assert!(sample_uniform(&mut rng, 1.0, 1.0).is_err());
        assert!(sample_uniform(&mut rng, 2.0, 1.0).is_err());
    }

    #[test]
    fn uniform_mean() {
        let mut rng = Rng::new(42);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| sample_uniform(&mut rng, 0.0, 1.0).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn gaussian_moments() {
        let g = sample_gaussian(&mut Rng::new(5), 100_000).unwrap();
        let (m, v) = mean_var(g.as_slice());
        assert!(m.abs() < 0.02, "mean {m}");
        assert!((v - 1.0).abs() < 0.05, "var {v}");
        assert_eq!(g, sample_gaussian(&mut Rng::new(5), 100_000).unwrap());
        let one = sample_gaussian(&mut Rng::new(1), 1).unwrap();
        assert_eq!(one.shape(), (1, 1));
        assert!(one.get(0, 0).is_finite());
        assert!(sample_gaussian(&mut Rng::new(1), 0).is_err());
    }

    #[test]
    fn student_t_variance() {
        for (nu, tol) in [(30.0, 0.10), (5.0, 0.15)] {
            let t = sample_student_t(&mut Rng::new(17), nu, 100_000).unwrap();
            let (_, v) = mean_var(t.as_slice());
            let expected = nu / (nu - 2.0);
            assert!(
                (v - expected).abs() <= tol * expected,
                "nu={nu}: var {v} vs {expected}"
            );
        }
        let a = sample_student_t(&mut Rng::new(2), 4.0, 64).unwrap();
        let b = sample_student_t(&mut Rng::new(2), 4.0, 64).unwrap();
        assert_eq!(a, b);
        assert!(sample_student_t(&mut Rng::new(2), 0.0, 4).is_err());
        assert!(sample_student_t(&mut Rng::new(2), -1.0, 4).is_err());
    }

    #[test]
    fn derived_streams_differ() {
        let parent = Rng::new(9);
        let mut a = parent.child(1);
        let mut b = parent.child(2);
        assert_ne!(a.next_u64(), b.next_u64());
        assert_eq!(parent.child(1).next_u64(), Rng::new(9).child(1).next_u64());
    }
}
