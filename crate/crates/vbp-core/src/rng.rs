//! Deterministic random streams.
//!
//! Every stochastic operation in this crate takes an explicit stream
//! argument; there is no global generator. Streams are xoshiro256**
//! generators seeded through SplitMix64, so a `(seed, tags...)` pair always
//! reproduces the same sequence on every platform.

use alloc::vec::Vec;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// xoshiro256** pseudo-random generator.
#[derive(Debug, Clone)]
pub struct Stream {
    s: [u64; 4],
}

impl Stream {
    /// Seed a stream from a single integer.
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        Stream {
            s: [
                splitmix64(&mut sm),
                splitmix64(&mut sm),
                splitmix64(&mut sm),
                splitmix64(&mut sm),
            ],
        }
    }

    /// Derive an independent substream from a seed and a list of tags.
    ///
    /// Used to give each (epoch, sequence) pass its own noise stream
    /// without consuming from a shared generator, so the draw order stays
    /// reproducible no matter how passes are scheduled.
    pub fn derive(seed: u64, tags: &[u64]) -> Self {
        let mut h = seed;
        for &t in tags {
            let mut sm = t.wrapping_mul(GOLDEN) ^ h;
            h = splitmix64(&mut sm) ^ sm;
        }
        Stream::new(h)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1]
            .wrapping_mul(5)
            .rotate_left(7)
            .wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    #[inline]
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    pub fn next_below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Standard normal deviate via Box-Muller.
    ///
    /// Consumes exactly two uniforms per call so that draw counts are
    /// predictable for replay.
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1]
        let u2 = self.next_f64();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        r * libm::cos(2.0 * core::f64::consts::PI * u2)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// Source of per-unit latent noise for the forward pass.
///
/// The network draws one value per context unit per step; which
/// implementation backs the draws decides between stochastic inference,
/// the deterministic limit, and replay of a recorded pass.
pub trait NoiseSource {
    fn standard_normal(&mut self) -> f64;
}

impl NoiseSource for Stream {
    #[inline]
    fn standard_normal(&mut self) -> f64 {
        Stream::standard_normal(self)
    }
}

/// Always returns zero: the deterministic limit `z = mu`.
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    #[inline]
    fn standard_normal(&mut self) -> f64 {
        0.0
    }
}

/// Replays a recorded noise tape; panics if the tape runs out.
///
/// Used by the gradient checker to hold epsilon fixed while parameters are
/// perturbed.
pub struct ReplayNoise {
    values: Vec<f64>,
    pos: usize,
}

impl ReplayNoise {
    pub fn new(values: Vec<f64>) -> Self {
        ReplayNoise { values, pos: 0 }
    }
}

impl NoiseSource for ReplayNoise {
    fn standard_normal(&mut self) -> f64 {
        let v = self.values[self.pos];
        self.pos += 1;
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Stream::new(42);
        let mut b = Stream::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn different_tags_give_different_streams() {
        let mut a = Stream::derive(7, &[1, 2]);
        let mut b = Stream::derive(7, &[2, 1]);
        let same = (0..16).all(|_| a.next_u64() == b.next_u64());
        assert!(!same);
    }

    #[test]
    fn uniform_moments() {
        let mut rng = Stream::new(3);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let x = rng.next_f64();
            assert!((0.0..1.0).contains(&x));
            sum += x;
            sum_sq += x * x;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!((mean - 0.5).abs() < 0.005, "mean {}", mean);
        assert!((var - 1.0 / 12.0).abs() < 0.005, "var {}", var);
    }

    #[test]
    fn normal_moments() {
        let mut rng = Stream::new(11);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let x = rng.standard_normal();
            sum += x;
            sum_sq += x * x;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {}", mean);
        assert!((var - 1.0).abs() < 0.02, "var {}", var);
    }

    #[test]
    fn next_below_is_in_range_and_covers() {
        let mut rng = Stream::new(5);
        let mut seen = [false; 7];
        for _ in 0..1000 {
            let v = rng.next_below(7) as usize;
            assert!(v < 7);
            seen[v] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn replay_reproduces_tape() {
        let tape = alloc::vec![0.5, -1.25, 3.0];
        let mut replay = ReplayNoise::new(tape.clone());
        for &v in &tape {
            assert_eq!(replay.standard_normal(), v);
        }
    }
}
