//! Diagonal Gaussian action distribution.

use rand::Rng;
use rand_distr::StandardNormal;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
pub const LOG_STD_INIT: f64 = -0.5;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicyOutput {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledAction {
    /// Unclamped draw; the log-probability refers to this value.
    pub raw: Vec<f64>,
    /// `raw` clamped to the command range `[-1, 1]`.
    pub clamped: Vec<f64>,
    pub log_prob: f64,
}

pub fn log_prob(mean: &[f64], log_std: &[f64], a: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(a)
        .map(|((&m, &s), &x)| {
            let z = (x - m) * (-s).exp();
            -0.5 * z * z - s - HALF_LN_2PI
        })
        .sum()
}

/// Derivatives of [`log_prob`] with respect to the mean and the log-std, written into the
/// output slices.
pub fn log_prob_grad(mean: &[f64], log_std: &[f64], a: &[f64], d_mean: &mut [f64], d_log_std: &mut [f64]) {
    for k in 0..mean.len() {
        let inv_var = (-2.0 * log_std[k]).exp();
        let diff = a[k] - mean[k];
        d_mean[k] = diff * inv_var;
        d_log_std[k] = diff * diff * inv_var - 1.0;
    }
}

/// `KL(old || new)`.
pub fn kl(mean_old: &[f64], ls_old: &[f64], mean_new: &[f64], ls_new: &[f64]) -> f64 {
    (0..mean_old.len())
        .map(|k| {
            let var_ratio = (2.0 * (ls_old[k] - ls_new[k])).exp();
            let d = mean_old[k] - mean_new[k];
            ls_new[k] - ls_old[k] + 0.5 * (var_ratio + d * d * (-2.0 * ls_new[k]).exp()) - 0.5
        })
        .sum()
}

/// Derivatives of [`kl`] with respect to the new mean and new log-std.
pub fn kl_grad(
    mean_old: &[f64],
    ls_old: &[f64],
    mean_new: &[f64],
    ls_new: &[f64],
    d_mean: &mut [f64],
    d_log_std: &mut [f64],
) {
    for k in 0..mean_old.len() {
        let inv_var_new = (-2.0 * ls_new[k]).exp();
        let d = mean_new[k] - mean_old[k];
        d_mean[k] = d * inv_var_new;
        d_log_std[k] = 1.0 - ((2.0 * ls_old[k]).exp() + d * d) * inv_var_new;
    }
}

pub fn entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|s| s + 0.5 + HALF_LN_2PI).sum()
}

pub fn sample<R: Rng>(mean: &[f64], log_std: &[f64], rng: &mut R) -> SampledAction {
    let raw: Vec<f64> = mean
        .iter()
        .zip(log_std)
        .map(|(&m, &s)| m + s.exp() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let clamped = raw.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
    let log_prob = log_prob(mean, log_std, &raw);
    SampledAction { raw, clamped, log_prob }
}
