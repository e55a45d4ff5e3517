//! Clipped surrogate, value regression and score-function gradients with their exact
//! parameter gradients.

use ndarray::{Array2, ArrayView2};

use crate::netcore::gaussian::{self, LOG_STD_MAX, LOG_STD_MIN};
use crate::netcore::ParamSet;

use super::TrainError;

/// Rows of a policy minibatch. `behavior_*` describe the policy that generated the samples.
#[derive(Clone, Copy)]
pub struct PolicyBatch<'a> {
    pub obs: ArrayView2<'a, f64>,
    pub actions: ArrayView2<'a, f64>,
    pub behavior_log_probs: &'a [f64],
    pub behavior_mean: ArrayView2<'a, f64>,
    pub behavior_log_std: ArrayView2<'a, f64>,
    pub advantages: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct PolicyLoss {
    pub loss: f64,
    pub grad: ParamSet,
    /// Mean clipped surrogate (the quantity being maximized).
    pub surrogate: f64,
    pub kl: f64,
    pub clip_fraction: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct PolicyLossConfig {
    pub clip: f64,
    pub kl_coeff: f64,
    pub entropy_coeff: f64,
}

fn log_std_mask(p: &ParamSet) -> Vec<f64> {
    p.log_std
        .as_ref()
        .expect("policy carries a log-std")
        .iter()
        .map(|&v| if (LOG_STD_MIN..=LOG_STD_MAX).contains(&v) { 1.0 } else { 0.0 })
        .collect()
}

/// `-mean[min(rho A, clip(rho) A)] + kl_coeff * mean KL(behavior || current) - entropy_coeff * H`.
pub fn ppo_policy_loss(policy: &ParamSet, b: &PolicyBatch, cfg: &PolicyLossConfig) -> Result<PolicyLoss, TrainError> {
    let n = b.obs.nrows();
    let act_dim = policy.output_dim();
    let (mean, cache) = policy.forward_cached(b.obs)?;
    let ls = policy.effective_log_std().expect("policy carries a log-std").to_vec();
    let inv_n = 1.0 / n as f64;
    let mut d_out = Array2::zeros((n, act_dim));
    let mut d_ls = vec![0.0; act_dim];
    let (mut surrogate, mut kl, mut clipped) = (0.0, 0.0, 0usize);
    let mut dm = vec![0.0; act_dim];
    let mut ds = vec![0.0; act_dim];
    for i in 0..n {
        let m = mean.row(i);
        let m = m.as_slice().unwrap();
        let a = b.actions.row(i);
        let a = a.as_slice().unwrap();
        let logp = gaussian::log_prob(m, &ls, a);
        let rho = (logp - b.behavior_log_probs[i]).exp();
        if !rho.is_finite() {
            return Err(TrainError::NonFiniteRatio { index: i });
        }
        let adv = b.advantages[i];
        let unclipped = rho * adv;
        let bounded = rho.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * adv;
        surrogate += unclipped.min(bounded);
        // the clipped branch is the minimum only when it is a constant
        let clip_active = (adv > 0.0 && rho > 1.0 + cfg.clip) || (adv < 0.0 && rho < 1.0 - cfg.clip);
        if clip_active {
            clipped += 1;
        } else {
            // d/dlogp of rho * A is rho * A
            gaussian::log_prob_grad(m, &ls, a, &mut dm, &mut ds);
            for k in 0..act_dim {
                d_out[[i, k]] -= inv_n * unclipped * dm[k];
                d_ls[k] -= inv_n * unclipped * ds[k];
            }
        }
        if cfg.kl_coeff != 0.0 {
            let bm = b.behavior_mean.row(i);
            let bs = b.behavior_log_std.row(i);
            let (bm, bs) = (bm.as_slice().unwrap(), bs.as_slice().unwrap());
            kl += gaussian::kl(bm, bs, m, &ls);
            gaussian::kl_grad(bm, bs, m, &ls, &mut dm, &mut ds);
            for k in 0..act_dim {
                d_out[[i, k]] += inv_n * cfg.kl_coeff * dm[k];
                d_ls[k] += inv_n * cfg.kl_coeff * ds[k];
            }
        }
    }
    surrogate *= inv_n;
    kl *= inv_n;
    let entropy = gaussian::entropy(&ls);
    let mut grad = policy.backward(&cache, d_out.view());
    let mask = log_std_mask(policy);
    let g_ls = grad.log_std.as_mut().unwrap();
    for k in 0..act_dim {
        g_ls[k] = mask[k] * (d_ls[k] - cfg.entropy_coeff);
    }
    Ok(PolicyLoss {
        loss: -surrogate + cfg.kl_coeff * kl - cfg.entropy_coeff * entropy,
        grad,
        surrogate,
        kl,
        clip_fraction: clipped as f64 * inv_n,
        entropy,
    })
}

/// Gradient of `mean_k[w_k * log pi(a_k | o_k)]` with respect to the policy parameters.
pub fn weighted_log_prob_grad(
    policy: &ParamSet,
    obs: ArrayView2<f64>,
    actions: ArrayView2<f64>,
    weights: &[f64],
) -> Result<ParamSet, TrainError> {
    let n = obs.nrows();
    let act_dim = policy.output_dim();
    let (mean, cache) = policy.forward_cached(obs)?;
    let ls = policy.effective_log_std().expect("policy carries a log-std").to_vec();
    let inv_n = 1.0 / n as f64;
    let mut d_out = Array2::zeros((n, act_dim));
    let mut d_ls = vec![0.0; act_dim];
    let mut dm = vec![0.0; act_dim];
    let mut ds = vec![0.0; act_dim];
    for i in 0..n {
        if weights[i] == 0.0 {
            continue;
        }
        let m = mean.row(i);
        let a = actions.row(i);
        gaussian::log_prob_grad(m.as_slice().unwrap(), &ls, a.as_slice().unwrap(), &mut dm, &mut ds);
        for k in 0..act_dim {
            d_out[[i, k]] = inv_n * weights[i] * dm[k];
            d_ls[k] += inv_n * weights[i] * ds[k];
        }
    }
    let mut grad = policy.backward(&cache, d_out.view());
    let mask = log_std_mask(policy);
    let g_ls = grad.log_std.as_mut().unwrap();
    for k in 0..act_dim {
        g_ls[k] = mask[k] * d_ls[k];
    }
    Ok(grad)
}

/// `0.5 * mean((V(x) - target)^2)` and its gradient.
pub fn value_loss(head: &ParamSet, obs: ArrayView2<f64>, targets: &[f64]) -> Result<(f64, ParamSet), TrainError> {
    let n = obs.nrows();
    let (v, cache) = head.forward_cached(obs)?;
    let inv_n = 1.0 / n as f64;
    let mut d_out = Array2::zeros((n, 1));
    let mut loss = 0.0;
    for i in 0..n {
        let e = v[[i, 0]] - targets[i];
        loss += 0.5 * e * e * inv_n;
        d_out[[i, 0]] = e * inv_n;
    }
    Ok((loss, head.backward(&cache, d_out.view())))
}
