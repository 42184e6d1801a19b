//! Counter-based random streams for reproducible Monte Carlo runs.
//!
//! Every consumer derives its own stream from a base seed and a short key
//! path (for example `(snr_index, trial_index)`). Streams are independent of
//! scheduling, so results are bit-identical across thread counts.

use crate::Complex64;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic random stream keyed by a seed and a key path.
///
/// The generator is a splitmix64 sequence whose starting state is a hash of
/// `(seed, key path)`; distinct key paths yield statistically independent
/// streams.
#[derive(Debug, Clone)]
pub struct CounterRng {
    state: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng {
            state: mix(seed.wrapping_add(GOLDEN)),
        }
    }

    /// Derives an independent stream for the given key path.
    pub fn substream(seed: u64, key_path: &[u64]) -> Self {
        let mut state = mix(seed.wrapping_add(GOLDEN));
        for &word in key_path {
            state = mix(state ^ word.wrapping_mul(GOLDEN));
        }
        CounterRng { state }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    /// Uniform draw in [0, 1) with 53-bit resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform draw in [lo, hi).
    #[inline]
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in [0, n).
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        // Multiply-shift range reduction; bias is negligible for the small n
        // used here (n << 2^64).
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Standard normal draw via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let (a, b) = self.normal_pair();
        // Second value intentionally discarded; complex draws use the pair.
        let _ = b;
        a
    }

    #[inline]
    fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = loop {
            let u = self.uniform();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.uniform();
        let mag = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        (mag * theta.cos(), mag * theta.sin())
    }

    /// Circularly-symmetric complex Gaussian with total variance `var`
    /// (`var / 2` per real dimension).
    #[inline]
    pub fn complex_gaussian(&mut self, var: f64) -> Complex64 {
        let (re, im) = self.normal_pair();
        let scale = (var / 2.0).sqrt();
        Complex64::new(re * scale, im * scale)
    }

    /// Random bit.
    #[inline]
    pub fn bit(&mut self) -> u8 {
        (self.next_u64() >> 63) as u8
    }

    /// Random Gray-mapped QPSK symbol of unit energy.
    #[inline]
    pub fn qpsk_symbol(&mut self) -> Complex64 {
        let w = self.next_u64();
        let re = if w & 1 == 0 { 1.0 } else { -1.0 };
        let im = if w & 2 == 0 { 1.0 } else { -1.0 };
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }
}
