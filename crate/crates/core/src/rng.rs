//! Deterministic random stream used everywhere randomness is needed.
//!
//! The generator is ChaCha12 seeded through `SeedableRng::seed_from_u64`
//! (SplitMix64 expansion), so the same seed yields the same draw sequence on
//! every platform and in every release. All derived draws — floats, normals,
//! shuffles, weighted picks — are built here from `next_u64` with fixed
//! algorithms, which makes training runs and synthetic datasets bit-for-bit
//! reproducible.

use alloc::vec::Vec;

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

use crate::math;

/// Seeded deterministic random number stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            seed,
            inner: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derives an independent stream; `salt` separates the sub-streams of one
    /// parent seed.
    pub fn fork(&self, salt: u64) -> RngStream {
        RngStream::new(self.seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in [0, 1), using the top 53 bits of one `u64`.
    #[inline]
    pub fn uniform_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, bound). `bound` must be positive.
    pub fn below(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        // Widening multiply keeps the draw unbiased enough for bag-scale
        // bounds while staying branch-free and portable.
        let x = self.next_u64() as u128;
        ((x * bound as u128) >> 64) as usize
    }

    /// Standard normal via Box–Muller. Each draw consumes exactly two
    /// uniforms; the second Box–Muller output is discarded so the stream
    /// state never carries hidden values.
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform_f64();
        let u2 = self.uniform_f64();
        // 1 - u1 lies in (0, 1], so the log never sees zero.
        let r = math::sqrt(-2.0 * math::ln(1.0 - u1));
        r * math::cos(2.0 * core::f64::consts::PI * u2)
    }

    pub fn normal_scaled(&mut self, std: f64) -> f64 {
        self.normal() * std
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        if items.len() < 2 {
            return;
        }
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// `count` distinct indices drawn uniformly from [0, n), returned in
    /// ascending order. Uses a partial Fisher–Yates over the index vector.
    pub fn distinct_indices(&mut self, n: usize, count: usize) -> Vec<usize> {
        debug_assert!(count <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..count {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        let mut picked: Vec<usize> = pool[..count].to_vec();
        picked.sort_unstable();
        picked
    }

    /// Index draw proportional to `cumulative` (nondecreasing, last entry is
    /// the total weight). Binary search over one uniform draw.
    pub fn weighted_index(&mut self, cumulative: &[f64]) -> usize {
        debug_assert!(!cumulative.is_empty());
        let total = *cumulative.last().unwrap();
        let target = self.uniform_f64() * total;
        match cumulative.binary_search_by(|probe| {
            probe.partial_cmp(&target).unwrap_or(core::cmp::Ordering::Less)
        }) {
            Ok(i) | Err(i) => i.min(cumulative.len() - 1),
        }
    }
}
