//! Meta-gradient of the global objective with respect to the coordination-factor
//! distribution, through one first-order inner policy step.

use ndarray::{ArrayView2, Axis};

use crate::netcore::ParamSet;
use crate::rollout::{SampleBatch, Stream};

use super::losses::{ppo_policy_loss, weighted_log_prob_grad, PolicyBatch, PolicyLossConfig};
use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LcfGradient {
    pub d_mu: f64,
    pub d_sigma: f64,
}

/// Per-sample inputs of the coordination-factor gradient.
#[derive(Clone, Copy)]
pub struct LcfBatch<'a> {
    pub obs: ArrayView2<'a, f64>,
    pub actions: ArrayView2<'a, f64>,
    pub behavior_log_probs: &'a [f64],
    pub behavior_mean: ArrayView2<'a, f64>,
    pub behavior_log_std: ArrayView2<'a, f64>,
    pub adv_individual: &'a [f64],
    pub adv_neighborhood: &'a [f64],
    pub adv_global: &'a [f64],
    pub phi: &'a [f64],
    pub eps: &'a [f64],
    pub clamped: &'a [bool],
}

impl<'a> LcfBatch<'a> {
    pub fn from_sample_batch(b: &'a SampleBatch) -> Self {
        Self {
            obs: b.policy_obs.view(),
            actions: b.actions.view(),
            behavior_log_probs: &b.log_probs,
            behavior_mean: b.behavior_mean.view(),
            behavior_log_std: b.behavior_log_std.view(),
            adv_individual: &b.advantages[Stream::Individual.index()],
            adv_neighborhood: &b.advantages[Stream::Neighborhood.index()],
            adv_global: &b.advantages[Stream::Global.index()],
            phi: &b.phi,
            eps: &b.eps,
            clamped: &b.clamped,
        }
    }
}

/// Gradient of the clipped global surrogate at `theta_new`, i.e. the first factor.
pub fn global_surrogate_grad(theta_new: &ParamSet, b: &LcfBatch, clip: f64) -> Result<ParamSet, TrainError> {
    let pb = PolicyBatch {
        obs: b.obs,
        actions: b.actions,
        behavior_log_probs: b.behavior_log_probs,
        behavior_mean: b.behavior_mean,
        behavior_log_std: b.behavior_log_std,
        advantages: b.adv_global,
    };
    let out = ppo_policy_loss(theta_new, &pb, &PolicyLossConfig { clip, kl_coeff: 0.0, entropy_coeff: 0.0 })?;
    let mut g = out.grad;
    g.scale(-1.0);
    Ok(g)
}

/// `d A_C / d phi` per sample, zero where the sampled factor was clamped.
pub fn coordination_weights(b: &LcfBatch) -> Vec<f64> {
    (0..b.phi.len())
        .map(|k| {
            if b.clamped[k] {
                0.0
            } else {
                -b.phi[k].sin() * b.adv_individual[k] + b.phi[k].cos() * b.adv_neighborhood[k]
            }
        })
        .collect()
}

/// Analytic gradient of the coordination-factor objective with respect to `(mu, sigma)`.
pub fn lcf_gradient(theta_old: &ParamSet, theta_new: &ParamSet, b: &LcfBatch, clip: f64) -> Result<LcfGradient, TrainError> {
    if b.eps.len() != b.obs.len_of(Axis(0)) {
        return Err(TrainError::MissingLcfNoise);
    }
    if theta_old.shapes() != theta_new.shapes() {
        return Err(TrainError::ShapeMismatch);
    }
    let g1 = global_surrogate_grad(theta_new, b, clip)?;
    lcf_gradient_from(&g1, theta_old, b)
}

/// Same as [`lcf_gradient`] with the first factor already computed.
pub fn lcf_gradient_from(g1: &ParamSet, theta_old: &ParamSet, b: &LcfBatch) -> Result<LcfGradient, TrainError> {
    let c = coordination_weights(b);
    let g2_mu = weighted_log_prob_grad(theta_old, b.obs, b.actions, &c)?;
    let c_eps: Vec<f64> = c.iter().zip(b.eps).map(|(c, e)| c * e).collect();
    let g2_sigma = weighted_log_prob_grad(theta_old, b.obs, b.actions, &c_eps)?;
    Ok(LcfGradient { d_mu: g1.dot(&g2_mu), d_sigma: g1.dot(&g2_sigma) })
}
