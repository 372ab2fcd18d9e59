//! The single seeded generator behind every random instance.
//!
//! Algorithm, fixed so other implementations can regenerate identical
//! instances:
//!
//! * state: xoshiro256++ (Blackman & Vigna), seeded from a `u64` by four
//!   successive SplitMix64 outputs (increment `0x9e3779b97f4a7c15`, mix
//!   constants `0xbf58476d1ce4e5b9` and `0x94d049bb133111eb`);
//! * [`SeededRng::uniform`]: `(next_u64 >> 11) * 2^-53`, in `[0, 1)`;
//! * [`SeededRng::range`]: `lo + (hi - lo) * uniform()`;
//! * [`SeededRng::below`]: high 64 bits of the 128-bit product
//!   `next_u64 * n` (no rejection step).

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

#[derive(Clone, Debug)]
pub struct SeededRng {
    inner: Xoshiro256PlusPlus,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Uniform integer in `lo..=hi`.
    pub fn between(&mut self, lo: usize, hi: usize) -> usize {
        lo + self.below(hi - lo + 1)
    }

    pub fn vec(&mut self, len: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..len).map(|_| self.range(lo, hi)).collect()
    }

    /// Derive an independent stream, e.g. one per instance of a batch.
    pub fn fork(&mut self) -> Self {
        Self::new(self.next_u64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_seeding_matches_reference() {
        // First xoshiro256++ output for seed 0, state from SplitMix64(0).
        let mut sm = 0u64;
        let mut splitmix = || {
            sm = sm.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = sm;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z ^ (z >> 31)
        };
        let s: [u64; 4] = [splitmix(), splitmix(), splitmix(), splitmix()];
        let expected = s[0].wrapping_add(s[3]).rotate_left(23).wrapping_add(s[0]);
        assert_eq!(SeededRng::new(0).next_u64(), expected);
    }

    #[test]
    fn same_seed_same_stream() {
        let a: Vec<u64> = {
            let mut r = SeededRng::new(42);
            (0..8).map(|_| r.next_u64()).collect()
        };
        let mut r = SeededRng::new(42);
        assert!(a.iter().all(|&v| v == r.next_u64()));
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut r = SeededRng::new(3);
        for _ in 0..1000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
            assert!(r.below(5) < 5);
        }
    }
}
