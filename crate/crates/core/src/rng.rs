//! Deterministic seeded random streams.
//!
//! Every stochastic component of a run (UE placement, fading, traffic,
//! policy exploration, replay sampling, ...) draws from its own named
//! stream derived from the run's master seed, so consuming more randomness
//! in one component never perturbs another. Same seed, same byte-for-byte
//! trajectory.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::real::Real;

/// Purpose of a random stream. Each kind maps to a disjoint ChaCha stream id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StreamKind {
    /// UE positions and per-episode shadowing.
    Placement,
    /// Per-TTI fading gains.
    Fading,
    /// Traffic arrival processes.
    Traffic,
    /// Spectral-efficiency calibration run.
    Calibration,
    /// Q-network weight initialization.
    NetInit,
    /// Epsilon-greedy exploration draws.
    Policy,
    /// Replay buffer sampling.
    Replay,
    /// Free-form test streams.
    Test,
}

impl StreamKind {
    fn id(self) -> u64 {
        match self {
            StreamKind::Placement => 1,
            StreamKind::Fading => 2,
            StreamKind::Traffic => 3,
            StreamKind::Calibration => 4,
            StreamKind::NetInit => 5,
            StreamKind::Policy => 6,
            StreamKind::Replay => 7,
            StreamKind::Test => 8,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A seeded random stream.
///
/// `(master_seed, kind, instance)` fully determines the sequence. `instance`
/// separates repetitions of the same concern (e.g. episode index).
#[derive(Clone, Debug)]
pub struct SimRng {
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn new(master_seed: u64, kind: StreamKind, instance: u64) -> Self {
        let mut state = master_seed;
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut inner = ChaCha8Rng::from_seed(seed);
        // Kind in the high bits leaves room for 2^40 instances per kind.
        inner.set_stream((kind.id() << 40) | (instance & ((1 << 40) - 1)));
        Self { inner }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn uniform<R: Real>(&mut self) -> R {
        R::of(self.uniform_f64())
    }

    #[inline]
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform_f64()
    }

    /// Standard normal via Box-Muller (no caching of the second variate).
    pub fn normal_f64(&mut self, mean: f64, stddev: f64) -> f64 {
        let u1 = 1.0 - self.uniform_f64(); // (0, 1]
        let u2 = self.uniform_f64();
        let mag = (-2.0 * u1.ln()).sqrt();
        mean + stddev * mag * (core::f64::consts::TAU * u2).cos()
    }

    /// Unit-mean exponential draw, used for Rayleigh power fading.
    #[inline]
    pub fn exponential_f64(&mut self) -> f64 {
        -(1.0 - self.uniform_f64()).ln()
    }

    /// Poisson draw by Knuth's product method; fine for the small
    /// per-TTI arrival intensities used here.
    pub fn poisson(&mut self, lambda: f64) -> u64 {
        debug_assert!((0.0..50.0).contains(&lambda), "product method needs small lambda");
        if lambda <= 0.0 {
            return 0;
        }
        let limit = (-lambda).exp();
        let mut count = 0u64;
        let mut product = 1.0;
        loop {
            product *= self.uniform_f64();
            if product <= limit {
                return count;
            }
            count += 1;
        }
    }

    /// Unbiased index in `[0, n)` by rejection.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index range must be nonempty");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    #[inline]
    pub fn chance(&mut self, p: f64) -> bool {
        self.uniform_f64() < p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = SimRng::new(42, StreamKind::Fading, 7);
        let mut b = SimRng::new(42, StreamKind::Fading, 7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn streams_are_independent() {
        let mut a = SimRng::new(42, StreamKind::Fading, 0);
        let mut b = SimRng::new(42, StreamKind::Traffic, 0);
        let mut c = SimRng::new(42, StreamKind::Fading, 1);
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let zs: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_ne!(xs, ys);
        assert_ne!(xs, zs);
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut rng = SimRng::new(1, StreamKind::Test, 0);
        for _ in 0..10_000 {
            let u = rng.uniform_f64();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn poisson_mean_close_to_lambda() {
        let mut rng = SimRng::new(3, StreamKind::Test, 0);
        let lambda = 2.5;
        let n = 100_000;
        let total: u64 = (0..n).map(|_| rng.poisson(lambda)).sum();
        let mean = total as f64 / n as f64;
        assert!((mean - lambda).abs() < 0.03, "mean {mean}");
    }

    #[test]
    fn exponential_is_unit_mean() {
        let mut rng = SimRng::new(4, StreamKind::Test, 0);
        let n = 100_000;
        let total: f64 = (0..n).map(|_| rng.exponential_f64()).sum();
        let mean = total / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn normal_moments() {
        let mut rng = SimRng::new(5, StreamKind::Test, 0);
        let n = 100_000;
        let samples: Vec<f64> = (0..n).map(|_| rng.normal_f64(0.0, 8.0)).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.15, "mean {mean}");
        assert!((var.sqrt() - 8.0).abs() < 0.15, "stddev {}", var.sqrt());
    }

    #[test]
    fn index_is_unbiased_enough() {
        let mut rng = SimRng::new(6, StreamKind::Test, 0);
        let mut counts = [0u32; 5];
        let n = 50_000;
        for _ in 0..n {
            counts[rng.index(5)] += 1;
        }
        let expected = n as f64 / 5.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        // 4 degrees of freedom; 3-sigma-ish bound.
        assert!(chi2 < 4.0 + 3.0 * (8.0f64).sqrt(), "chi2 {chi2}");
    }
}
