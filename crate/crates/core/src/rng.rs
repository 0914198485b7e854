//! Seeded random streams.
//!
//! Every consumer draws from its own xoshiro256++ stream. A stream is seeded
//! through SplitMix64 from `mix(seed, stream_id, index)`, so the values seen by
//! one consumer never depend on how much another consumer has drawn.
//!
//! | stream        | id | index                      |
//! |---------------|----|----------------------------|
//! | init          | 0  | 0                          |
//! | batching      | 1  | epoch                      |
//! | perturbation  | 2  | 0 (re-seeded for every eps)|
//! | sampling      | 3  | 0                          |
//! | split         | 4  | 0                          |
//! | probes        | 5  | caller-chosen              |
//! | corpus        | 6  | document index             |
//!
//! Uniform doubles use the top 53 bits of `next_u64`; normals use the
//! Box-Muller transform (cosine branch only).

use rand_xoshiro::rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 0,
    Batching = 1,
    Perturbation = 2,
    Sampling = 3,
    Split = 4,
    Probes = 5,
    Corpus = 6,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(seed: u64, stream: u64, index: u64) -> u64 {
    // One SplitMix64 finalizer round over the combined key.
    let mut x =
        seed ^ stream.wrapping_add(1).wrapping_mul(GOLDEN) ^ index.wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// A deterministic random stream.
#[derive(Clone, Debug)]
pub struct SeededRng {
    inner: Xoshiro256PlusPlus,
}

impl SeededRng {
    pub fn new(seed: u64, stream: Stream, index: u64) -> Self {
        Self {
            inner: Xoshiro256PlusPlus::seed_from_u64(mix(seed, stream as u64, index)),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Integer uniform in `lo..=hi` (by multiply-shift; bias is below 2^-32 for small ranges).
    pub fn range_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        debug_assert!(lo <= hi);
        let span = (hi - lo) as u128 + 1;
        lo + ((self.next_u64() as u128 * span) >> 64) as usize
    }

    /// Index below `n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.range_inclusive(0, n - 1)
    }

    pub fn normal(&mut self) -> f64 {
        // 1 - u keeps the log argument in (0, 1].
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// ±1 with equal probability.
    pub fn rademacher(&mut self) -> f64 {
        if self.next_u64() >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Gaussian direction of unit Euclidean norm.
    pub fn unit_direction(&mut self, dim: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| self.normal()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = {
            let mut r = SeededRng::new(7, Stream::Init, 0);
            (0..4).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = SeededRng::new(7, Stream::Init, 0);
            (0..4).map(|_| r.next_u64()).collect()
        };
        let c: Vec<u64> = {
            let mut r = SeededRng::new(7, Stream::Batching, 0);
            (0..4).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn uniform_and_normal_moments() {
        let mut r = SeededRng::new(1, Stream::Probes, 0);
        let n = 20_000;
        let u: Vec<f64> = (0..n).map(|_| r.uniform()).collect();
        assert!(u.iter().all(|x| (0.0..1.0).contains(x)));
        let mean = u.iter().sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01);
        let g: Vec<f64> = (0..n).map(|_| r.normal()).collect();
        let gm = g.iter().sum::<f64>() / n as f64;
        let gv = g.iter().map(|x| (x - gm).powi(2)).sum::<f64>() / n as f64;
        assert!(gm.abs() < 0.03);
        assert!((gv - 1.0).abs() < 0.05);
    }

    #[test]
    fn range_stays_in_bounds() {
        let mut r = SeededRng::new(3, Stream::Corpus, 9);
        for _ in 0..1000 {
            let k = r.range_inclusive(2, 5);
            assert!((2..=5).contains(&k));
        }
        let d = r.unit_direction(5);
        let n: f64 = d.iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }
}
