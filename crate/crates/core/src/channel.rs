//! Full-duplex token routing with per-frame corruption.
//!
//! Each frame, A's output becomes B's input and vice versa. With probability
//! `noise_p` a routed token is replaced by a uniform draw over the *other*
//! `vocab_size - 1` tokens, so `noise_p` is exactly the alteration rate.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, labels, Rng};

/// Named noise levels and their default probabilities. Only "high" is pinned
/// to the point where routed speech stops being intelligible; the interior
/// values are configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseLevel {
    None,
    Low,
    Medium,
    High,
}

impl NoiseLevel {
    pub fn probability(self) -> f64 {
        match self {
            NoiseLevel::None => 0.0,
            NoiseLevel::Low => 0.2,
            NoiseLevel::Medium => 0.45,
            NoiseLevel::High => 0.7,
        }
    }

    pub const ALL: [NoiseLevel; 4] = [
        NoiseLevel::None,
        NoiseLevel::Low,
        NoiseLevel::Medium,
        NoiseLevel::High,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub noise_p: f64,
    pub rng_seed: u64,
}

impl ChannelConfig {
    pub fn new(noise_p: f64, rng_seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&noise_p) {
            return Err(Error::Config(format!("noise_p {noise_p} outside [0, 1]")));
        }
        Ok(Self { noise_p, rng_seed })
    }
}

/// Passes `token` through a noisy frame. Exactly one uniform draw decides
/// whether to alter, and a second draw picks the replacement only when
/// altering.
pub fn corrupt_frame(token: u32, vocab_size: u32, noise_p: f64, rng: &mut Rng) -> Result<u32> {
    if vocab_size < 2 {
        return Err(Error::InvalidVocab(vocab_size as usize));
    }
    debug_assert!(token < vocab_size);
    let u: f64 = rng.random();
    if u >= noise_p {
        return Ok(token);
    }
    let r = rng.random_range(0..vocab_size - 1);
    Ok(if r >= token { r + 1 } else { r })
}

/// One direction of the channel: its own generator and an alteration count.
#[derive(Debug, Clone)]
pub struct Link {
    rng: Rng,
    noise_p: f64,
    altered: u64,
    routed: u64,
}

impl Link {
    pub fn new(noise_p: f64, rng: Rng) -> Self {
        Self {
            rng,
            noise_p,
            altered: 0,
            routed: 0,
        }
    }

    pub fn pass(&mut self, token: u32, vocab_size: u32) -> Result<u32> {
        let out = corrupt_frame(token, vocab_size, self.noise_p, &mut self.rng)?;
        self.routed += 1;
        if out != token {
            self.altered += 1;
        }
        Ok(out)
    }

    pub fn alteration_rate(&self) -> f64 {
        if self.routed == 0 {
            0.0
        } else {
            self.altered as f64 / self.routed as f64
        }
    }
}

/// The two-way channel for one dialogue. A sequential state machine; build
/// one per dialogue.
#[derive(Debug, Clone)]
pub struct Channel {
    vocab_size: u32,
    a_to_b: Link,
    b_to_a: Link,
}

impl Channel {
    pub fn new(cfg: ChannelConfig, vocab_size: u32) -> Result<Self> {
        Self::from_links(
            vocab_size,
            Link::new(cfg.noise_p, rng::substream(cfg.rng_seed, labels::CHANNEL_A_TO_B)),
            Link::new(cfg.noise_p, rng::substream(cfg.rng_seed, labels::CHANNEL_B_TO_A)),
        )
    }

    pub fn from_links(vocab_size: u32, a_to_b: Link, b_to_a: Link) -> Result<Self> {
        if vocab_size < 2 {
            return Err(Error::InvalidVocab(vocab_size as usize));
        }
        Ok(Self {
            vocab_size,
            a_to_b,
            b_to_a,
        })
    }

    /// Routes one frame; returns `(in_b, in_a)`.
    pub fn route_step(&mut self, out_a: u32, out_b: u32) -> Result<(u32, u32)> {
        let in_b = self.a_to_b.pass(out_a, self.vocab_size)?;
        let in_a = self.b_to_a.pass(out_b, self.vocab_size)?;
        Ok((in_b, in_a))
    }

    pub fn links(&self) -> (&Link, &Link) {
        (&self.a_to_b, &self.b_to_a)
    }
}
