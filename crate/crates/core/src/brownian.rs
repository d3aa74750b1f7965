//! Counter-based Brownian increments.
//!
//! Every increment is a pure function of `(seed, channel id, step)`: the
//! ChaCha8 keystream for `seed` is opened on stream `channel id` at the word
//! offset of `step`, and four 32-bit words feed one Box–Muller draw. No state
//! is carried between calls, so paths can be evaluated in any order or on any
//! thread, and two solvers sharing a driver see the same Brownian path for
//! every channel they have in common.

use std::f64::consts::PI;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BrownianDriver {
    seed: u64,
    dt: f64,
}

impl BrownianDriver {
    pub fn new(seed: u64, dt: f64) -> Result<BrownianDriver> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
        }
        Ok(BrownianDriver { seed, dt })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// A standard normal variate keyed by `(seed, channel, step)`.
    pub fn standard_normal(&self, channel: u64, step: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(channel);
        rng.set_word_pos(step as u128 * 4);
        let a = rng.next_u64();
        let b = rng.next_u64();
        // u1 in (0, 1], u2 in [0, 1)
        let u1 = ((a >> 11) as f64 + 1.0) / (1u64 << 53) as f64;
        let u2 = (b >> 11) as f64 / (1u64 << 53) as f64;
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    /// `ΔB` for one channel over step `step`, distributed as `N(0, dt)`.
    pub fn increment(&self, channel: u64, step: u64) -> f64 {
        self.dt.sqrt() * self.standard_normal(channel, step)
    }

    /// Increments for a list of channel ids, in the given order.
    pub fn increments(&self, channels: &[u64], step: u64) -> Vec<f64> {
        channels.iter().map(|&c| self.increment(c, step)).collect()
    }

    pub fn increments_into(&self, channels: &[u64], step: u64, out: &mut Vec<f64>) {
        out.clear();
        out.extend(channels.iter().map(|&c| self.increment(c, step)));
    }
}

/// Decorrelated seed for path `index` of an ensemble started from `base`.
pub fn path_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let d = BrownianDriver::new(42, 1e-3).unwrap();
        assert_eq!(d.increment(7, 100), d.increment(7, 100));
        assert_ne!(d.increment(7, 100), d.increment(8, 100));
        assert_ne!(d.increment(7, 100), d.increment(7, 101));
        let other = BrownianDriver::new(43, 1e-3).unwrap();
        assert_ne!(d.increment(7, 100), other.increment(7, 100));
        // evaluation order does not matter
        let forward: Vec<f64> = (0..50).map(|s| d.increment(3, s)).collect();
        let backward: Vec<f64> = (0..50).rev().map(|s| d.increment(3, s)).collect();
        assert!(forward.iter().eq(backward.iter().rev()));
    }

    #[test]
    fn rejects_bad_dt() {
        assert!(BrownianDriver::new(1, 0.0).is_err());
        assert!(BrownianDriver::new(1, -1.0).is_err());
        assert!(BrownianDriver::new(1, f64::NAN).is_err());
    }

    #[test]
    fn variance_matches_dt() {
        let dt = 2e-3;
        let d = BrownianDriver::new(2024, dt).unwrap();
        let n = 100_000u64;
        let (mut sum, mut sq) = (0.0, 0.0);
        for s in 0..n {
            let x = d.increment(5, s);
            sum += x;
            sq += x * x;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!((var - dt).abs() < 0.03 * dt, "variance {var}");
        assert!(mean.abs() < 4.0 * (dt / n as f64).sqrt());
    }

    #[test]
    fn channels_are_uncorrelated() {
        let d = BrownianDriver::new(9, 1.0).unwrap();
        let n = 100_000u64;
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for s in 0..n {
            let a = d.increment(1, s);
            let b = d.increment(2, s);
            sab += a * b;
            saa += a * a;
            sbb += b * b;
        }
        let corr = sab / (saa * sbb).sqrt();
        assert!(corr.abs() < 0.02, "correlation {corr}");
    }

    #[test]
    fn path_seeds_differ() {
        let seeds: Vec<u64> = (0..1000).map(|i| path_seed(7, i)).collect();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), seeds.len());
    }
}
