//! Deterministic pseudo-random streams.
//!
//! Every random choice in the workspace is drawn from a stream derived
//! from `(master seed, tag path)`, never from a stream shared across
//! devices or epochs. That makes each device's work a pure function of
//! its inputs, so results cannot depend on scheduling or thread count,
//! and reruns with the same seeds are bit-identical.
//!
//! The generator is xoshiro256++ seeded through SplitMix64.

use alloc::vec::Vec;

use crate::float;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// xoshiro256++ stream.
#[derive(Debug, Clone)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::derive(seed, &[])
    }

    /// Stream keyed by a master seed and a tag path, e.g.
    /// `Rng::derive(master, &[TAG_SHUFFLE, epoch, device])`.
    pub fn derive(seed: u64, tags: &[u64]) -> Self {
        let mut state = seed;
        // Fold each tag in through an extra SplitMix64 round so that
        // sibling streams (device 3 epoch 5 vs device 5 epoch 3) differ.
        for &t in tags {
            state = splitmix64(&mut state) ^ t.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        }
        let mut s = [0u64; 4];
        for slot in &mut s {
            *slot = splitmix64(&mut state);
        }
        // xoshiro must not start from the all-zero state.
        if s == [0, 0, 0, 0] {
            s[0] = 0x1;
        }
        Self { s }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let result = s[0]
            .wrapping_add(s[3])
            .rotate_left(23)
            .wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `0..n` (n > 0) via the multiply-shift reduction.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal via Box-Muller (uncached; two uniforms per draw).
    pub fn gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1]
        let u2 = self.next_f64();
        float::sqrt(-2.0 * float::ln(u1)) * float::cos(2.0 * core::f64::consts::PI * u2)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }

    /// `k` distinct indices drawn without replacement from `0..n`.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        debug_assert!(k <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        // Partial Fisher-Yates: after i swaps the first i entries are the sample.
        for i in 0..k {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

/// Stream tags; kept in one place so call sites cannot collide.
pub mod tag {
    pub const MODEL_INIT: u64 = 1;
    pub const LOCAL_SHUFFLE: u64 = 2;
    pub const DISTILL_SHUFFLE: u64 = 3;
    pub const TOPOLOGY: u64 = 4;
    pub const DATASET: u64 = 5;
    pub const PARTITION: u64 = 6;
    pub const PUBLIC_SET: u64 = 7;
    pub const GRID: u64 = 8;
    pub const DROPOUT: u64 = 9;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn tag_order_matters() {
        let mut a = Rng::derive(7, &[3, 5]);
        let mut b = Rng::derive(7, &[5, 3]);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn uniform_and_below_in_range() {
        let mut r = Rng::new(1);
        for _ in 0..1000 {
            let u = r.next_f64();
            assert!((0.0..1.0).contains(&u));
            assert!(r.below(7) < 7);
        }
    }

    #[test]
    fn gaussian_moments() {
        let mut r = Rng::new(9);
        let n = 20_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z = r.gaussian();
            s1 += z;
            s2 += z * z;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn sample_indices_distinct() {
        let mut r = Rng::new(3);
        let sample = r.sample_indices(10, 10);
        let mut sorted = sample.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
    }
}
