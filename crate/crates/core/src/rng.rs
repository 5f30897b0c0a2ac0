//! Portable seeded randomness.
//!
//! Every random decision in the crate (fold assignment, landmark sampling)
//! draws from [`SplitRng`]: the reference `pcg64` generator (128-bit LCG,
//! XSL-RR output) constructed as `Pcg64::new(seed as u128, STREAM)`.
//! On top of the raw 64-bit words only two derived draws are used, both
//! specified here so that another implementation can reproduce a run:
//!
//! * `below(n)`: rejection sampling on `next_u64`. Let
//!   `zone = u64::MAX - (u64::MAX % n)`; draw words until one is `< zone`
//!   and return it modulo `n`.
//! * `unit()`: `(next_u64 >> 11) * 2^-53`, a uniform double in `[0, 1)`.

use rand_core::Rng;
use rand_pcg::Pcg64;

/// Stream selector (the PCG reference default increment).
pub const STREAM: u128 = 0x0a02_bdbf_7bb3_c0a7_ac28_fa16_a64a_bf96;

#[derive(Clone, Debug)]
pub struct SplitRng {
    inner: Pcg64,
}

impl SplitRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Pcg64::new(u128::from(seed), STREAM),
        }
    }

    /// Independent generator for a sub-task (e.g. one fold) of a seeded run.
    pub fn derive(seed: u64, task: u64) -> Self {
        // splitmix64 finalizer over (seed, task)
        let mut z = seed ^ task.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        Self::new(z ^ (z >> 31))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `[0, n)`. Panics when `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return (x % n) as usize;
            }
        }
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Fisher-Yates, walking from the back: for `i = len-1 ..= 1` swap
    /// `i` with `below(i + 1)`.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Draws `count` distinct positions from `weights` without replacement,
    /// each draw proportional to the remaining weights. Once every remaining
    /// position has zero weight the rest are drawn uniformly, so the result
    /// always has `min(count, weights.len())` entries.
    ///
    /// One weighted draw is `target = unit() * total`, then the first
    /// remaining position (in input order) whose running weight sum exceeds
    /// `target`.
    pub fn weighted_sample(&mut self, weights: &[f64], count: usize) -> Vec<usize> {
        let mut remaining: Vec<usize> = (0..weights.len()).collect();
        let mut picked = Vec::with_capacity(count.min(weights.len()));
        while picked.len() < count && !remaining.is_empty() {
            let total: f64 = remaining.iter().map(|&i| weights[i]).sum();
            let slot = if total > 0.0 {
                let target = self.unit() * total;
                let mut acc = 0.0;
                let mut chosen = None;
                let mut last_positive = 0;
                for (slot, &i) in remaining.iter().enumerate() {
                    if weights[i] > 0.0 {
                        last_positive = slot;
                        acc += weights[i];
                        if acc > target {
                            chosen = Some(slot);
                            break;
                        }
                    }
                }
                // rounding can leave acc == target on the final step
                chosen.unwrap_or(last_positive)
            } else {
                self.below(remaining.len())
            };
            picked.push(remaining.remove(slot));
        }
        picked
    }

    /// `count` distinct uniform positions out of `len`, in draw order.
    pub fn sample(&mut self, len: usize, count: usize) -> Vec<usize> {
        let mut remaining: Vec<usize> = (0..len).collect();
        let mut picked = Vec::with_capacity(count.min(len));
        while picked.len() < count && !remaining.is_empty() {
            let slot = self.below(remaining.len());
            picked.push(remaining.swap_remove(slot));
        }
        picked
    }
}
