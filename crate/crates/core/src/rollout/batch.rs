use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{compute_gae, policy_input, EnvironmentalEpisode, RolloutError, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaeConfig {
    /// Discount per [`Stream`].
    pub gammas: [f64; 3],
    pub lambda: f64,
}

impl Default for GaeConfig {
    fn default() -> Self {
        Self { gammas: [0.99, 0.99, 1.0], lambda: 0.95 }
    }
}

/// Flattened transitions with advantage and target columns per stream.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub policy_obs: Array2<f64>,
    pub critic_obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub log_probs: Vec<f64>,
    pub behavior_mean: Array2<f64>,
    pub behavior_log_std: Array2<f64>,
    pub advantages: [Vec<f64>; 3],
    pub targets: [Vec<f64>; 3],
    pub values: [Vec<f64>; 3],
    pub phi: Vec<f64>,
    pub eps: Vec<f64>,
    pub clamped: Vec<bool>,
}

fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let inv = if std > 1e-12 { 1.0 / std } else { 1.0 };
    v.iter_mut().for_each(|x| *x = (*x - mean) * inv);
}

pub fn build_batch(
    episodes: &[EnvironmentalEpisode],
    gae: &GaeConfig,
    normalize: bool,
    feed_phi: bool,
) -> Result<SampleBatch, RolloutError> {
    let n: usize = episodes.iter().map(|e| e.transitions()).sum();
    let first = episodes
        .iter()
        .flat_map(|e| e.buffers.iter())
        .flat_map(|b| b.records.first())
        .next()
        .ok_or(RolloutError::EmptyBatch)?;
    let obs_dim = first.obs.len();
    let pol_dim = obs_dim + usize::from(feed_phi);
    let crit_dim = first.critic_obs.as_ref().map_or(obs_dim, |c| c.len());
    let act_dim = first.action.len();
    let mut b = SampleBatch {
        policy_obs: Array2::zeros((n, pol_dim)),
        critic_obs: Array2::zeros((n, crit_dim)),
        actions: Array2::zeros((n, act_dim)),
        log_probs: Vec::with_capacity(n),
        behavior_mean: Array2::zeros((n, act_dim)),
        behavior_log_std: Array2::zeros((n, act_dim)),
        advantages: Default::default(),
        targets: Default::default(),
        values: Default::default(),
        phi: Vec::with_capacity(n),
        eps: Vec::with_capacity(n),
        clamped: Vec::with_capacity(n),
    };
    let mut row = 0;
    for buf in episodes.iter().flat_map(|e| e.buffers.iter()) {
        for s in Stream::ALL {
            let k = s.index();
            let rewards: Vec<f64> = buf.records.iter().map(|r| r.reward(s)).collect();
            let values: Vec<f64> = buf.records.iter().map(|r| r.values[k]).collect();
            let (adv, tgt) = compute_gae(&rewards, &values, buf.bootstrap[k], gae.gammas[k], gae.lambda);
            b.advantages[k].extend(adv);
            b.targets[k].extend(tgt);
            b.values[k].extend(values);
        }
        for r in &buf.records {
            let pin = policy_input(&r.obs, r.lcf_phi, feed_phi);
            b.policy_obs.row_mut(row).iter_mut().zip(&pin).for_each(|(d, s)| *d = *s);
            let crit = r.critic_obs.as_deref().unwrap_or(&r.obs);
            b.critic_obs.row_mut(row).iter_mut().zip(crit).for_each(|(d, s)| *d = *s);
            b.actions.row_mut(row).iter_mut().zip(&r.action).for_each(|(d, s)| *d = *s);
            b.behavior_mean.row_mut(row).iter_mut().zip(&r.behavior_mean).for_each(|(d, s)| *d = *s);
            b.behavior_log_std.row_mut(row).iter_mut().zip(&r.behavior_log_std).for_each(|(d, s)| *d = *s);
            b.log_probs.push(r.log_prob);
            b.phi.push(r.lcf_phi);
            b.eps.push(r.lcf_eps);
            b.clamped.push(r.lcf_clamped);
            row += 1;
        }
    }
    if normalize {
        for a in &mut b.advantages {
            standardize(a);
        }
    }
    Ok(b)
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    /// Shuffled index chunks of at most `size` rows; the last chunk may be smaller.
    pub fn minibatches<R: Rng>(&self, size: usize, rng: &mut R) -> Vec<Vec<usize>> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(rng);
        idx.chunks(size.max(1)).map(|c| c.to_vec()).collect()
    }
}
