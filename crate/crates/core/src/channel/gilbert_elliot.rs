//! Two-state burst-error channel.
//!
//! The chain advances once per bit. In `Good` the bit passes untouched and
//! the chain enters `Bad` with probability `p_gb`. Entering `Bad` starts a
//! burst that flips exactly `burst_k` consecutive bits. When a burst ends
//! the chain returns to `Good` with probability `p_bg`, otherwise another
//! `burst_k`-bit burst starts immediately.
//!
//! Long-run flipped fraction: `(k / p_bg) / (1 / p_gb + k / p_bg)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::ImpairmentSpec;

/// RNG stream used for bit corruption; frame dropping uses its own stream.
pub(crate) const CORRUPTION_STREAM: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelState {
    Good,
    Bad,
}

#[derive(Debug, Clone)]
pub struct GilbertElliotState {
    state: ChannelState,
    burst_remaining: u32,
    p_gb: f64,
    p_bg: f64,
    burst_k: u32,
    rng: ChaCha8Rng,
}

impl GilbertElliotState {
    /// Starts in `Good`. Probabilities are clamped into `[0, 1]` and a zero
    /// burst size is treated as 1; call `ImpairmentSpec::validate` first to reject those.
    pub fn new(p_gb: f64, p_bg: f64, burst_k: u32, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(CORRUPTION_STREAM);
        GilbertElliotState {
            state: ChannelState::Good,
            burst_remaining: 0,
            p_gb: clamp_probability(p_gb),
            p_bg: clamp_probability(p_bg),
            burst_k: burst_k.max(1),
            rng,
        }
    }

    pub fn from_spec(spec: &ImpairmentSpec) -> Self {
        Self::new(spec.p_gb, spec.p_bg, spec.burst_k, spec.seed)
    }

    pub fn state(&self) -> ChannelState {
        self.state
    }

    pub fn burst_remaining(&self) -> u32 {
        self.burst_remaining
    }

    /// Advances one bit; returns true when that bit is flipped.
    pub fn step(&mut self) -> bool {
        match self.state {
            ChannelState::Good => {
                if self.rng.gen::<f64>() < self.p_gb {
                    self.state = ChannelState::Bad;
                    self.burst_remaining = self.burst_k;
                }
                false
            }
            ChannelState::Bad => {
                self.burst_remaining -= 1;
                if self.burst_remaining == 0 {
                    if self.rng.gen::<f64>() < self.p_bg {
                        self.state = ChannelState::Good;
                    } else {
                        self.burst_remaining = self.burst_k;
                    }
                }
                true
            }
        }
    }

    /// Flip decisions for the next `n` bits.
    pub fn error_pattern(&mut self, n: usize) -> Vec<bool> {
        (0..n).map(|_| self.step()).collect()
    }

    /// XORs the error pattern into `bytes`, most significant bit first.
    pub fn corrupt_in_place(&mut self, bytes: &mut [u8]) {
        for byte in bytes.iter_mut() {
            let mut mask = 0u8;
            for bit in (0..8).rev() {
                if self.step() {
                    mask |= 1 << bit;
                }
            }
            *byte ^= mask;
        }
    }
}

fn clamp_probability(p: f64) -> f64 {
    if p.is_nan() {
        0.0
    } else {
        p.clamp(0.0, 1.0)
    }
}

/// Corrupts a bitstream; same length as the input, deterministic in `spec.seed`.
pub fn ge_corrupt(bits: &[u8], spec: &ImpairmentSpec) -> Vec<u8> {
    let mut out = bits.to_vec();
    GilbertElliotState::from_spec(spec).corrupt_in_place(&mut out);
    out
}

/// Closed-form long-run fraction of flipped bits.
pub fn expected_flip_fraction(p_gb: f64, p_bg: f64, burst_k: u32) -> f64 {
    if p_gb <= 0.0 {
        return 0.0;
    }
    if p_bg <= 0.0 {
        return 1.0;
    }
    let bad = f64::from(burst_k) / p_bg;
    bad / (1.0 / p_gb + bad)
}
