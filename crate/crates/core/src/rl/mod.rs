//! Off-policy plumbing shared by the centralized and decentralized learners.
//!
//! Gaussian draws use `rand_distr::StandardNormal` (a ziggurat sampler) on a
//! caller-supplied seeded generator; the crate seeds everything with
//! `ChaCha8Rng`, so a given seed reproduces every draw on any platform.

mod buffer;

pub use buffer::{ReplayBuffer, Transition, TransitionDims};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::MlpNetwork;

/// Componentwise action limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionBounds {
    pub low: f64,
    pub high: f64,
}

impl ActionBounds {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        let b = Self { low, high };
        b.validate()?;
        Ok(b)
    }

    pub fn symmetric(limit: f64) -> Result<Self> {
        Self::new(-limit, limit)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.low.is_finite() && self.high.is_finite() && self.low < self.high) {
            return Err(Error::config(format!(
                "action bounds need low < high, got [{}, {}]",
                self.low, self.high
            )));
        }
        Ok(())
    }

    /// Largest absolute action magnitude.
    pub fn magnitude(&self) -> f64 {
        self.low.abs().max(self.high.abs())
    }

    #[inline]
    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.low, self.high)
    }

    pub fn contains(&self, a: &[f64]) -> bool {
        a.iter().all(|&v| v >= self.low && v <= self.high)
    }
}

pub fn clip_action(a: &[f64], bounds: ActionBounds) -> Vec<f64> {
    a.iter().map(|&v| bounds.clamp(v)).collect()
}

/// `dim` independent draws from N(0, sigma^2).
pub fn gaussian_noise<R: Rng + ?Sized>(dim: usize, sigma: f64, rng: &mut R) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        })
        .collect()
}

/// Gaussian noise with each component clamped to `[-clip_bound, clip_bound]`.
pub fn clipped_gaussian_noise<R: Rng + ?Sized>(
    dim: usize,
    sigma: f64,
    clip_bound: f64,
    rng: &mut R,
) -> Vec<f64> {
    let mut noise = gaussian_noise(dim, sigma, rng);
    for v in &mut noise {
        *v = v.clamp(-clip_bound, clip_bound);
    }
    noise
}

/// Moves `target` toward `online`: every parameter becomes
/// `tau * online + (1 - tau) * target`.
pub fn soft_update(target: &mut MlpNetwork, online: &MlpNetwork, tau: f64) -> Result<()> {
    if !target.same_layout(online) {
        return Err(Error::shape("soft update between different layouts"));
    }
    let keep = 1.0 - tau;
    for (t, &o) in target.params_mut().iter_mut().zip(online.params()) {
        // Equal values are already the exact result of the convex combination.
        if *t != o {
            *t = tau * o + keep * *t;
        }
    }
    Ok(())
}
