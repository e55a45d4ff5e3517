use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub const SIGMA_MIN: f64 = 1e-3;
pub const SIGMA_MAX: f64 = 1.0;

/// Gaussian over the local coordination factor, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LcfDistribution {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LcfSample {
    pub phi: f64,
    pub eps: f64,
    /// The raw draw fell outside `[-pi/2, pi/2]` and was clamped.
    pub clamped: bool,
}

impl LcfDistribution {
    pub fn new(mu: f64, sigma: f64) -> Self {
        Self { mu: mu.clamp(-FRAC_PI_2, FRAC_PI_2), sigma: sigma.clamp(SIGMA_MIN, SIGMA_MAX) }
    }

    /// Degenerate distribution that always yields `mu`.
    pub fn fixed(mu: f64) -> Self {
        Self { mu: mu.clamp(-FRAC_PI_2, FRAC_PI_2), sigma: 0.0 }
    }

    pub fn phi_from_eps(&self, eps: f64) -> LcfSample {
        let raw = self.mu + self.sigma * eps;
        let phi = raw.clamp(-FRAC_PI_2, FRAC_PI_2);
        LcfSample { phi, eps, clamped: phi != raw }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> LcfSample {
        self.phi_from_eps(rng.sample(StandardNormal))
    }

    /// One plain gradient-ascent step. Returns false and leaves the distribution unchanged
    /// when the gradient is not finite.
    pub fn ascend(&mut self, grad: (f64, f64), lr: f64) -> bool {
        if !grad.0.is_finite() || !grad.1.is_finite() {
            log::warn!("skipping coordination-factor update with non-finite gradient {grad:?}");
            return false;
        }
        self.mu = (self.mu + lr * grad.0).clamp(-FRAC_PI_2, FRAC_PI_2);
        self.sigma = (self.sigma + lr * grad.1).clamp(SIGMA_MIN, SIGMA_MAX);
        true
    }
}

/// `cos(phi) * a_i + sin(phi) * a_n`.
pub fn coordinated_advantage(a_i: f64, a_n: f64, phi: f64) -> f64 {
    phi.cos() * a_i + phi.sin() * a_n
}
