use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::env::{AgentId, KinematicAction, Observation, SceneSpec, SimConfig, Simulator, TerminationReason, Vec2};
use crate::netcore::{gaussian, ParamSet};
use crate::trainer::lcf::{LcfDistribution, LcfSample};
use crate::trainer::mfpo::CriticSpec;

use super::{fill_reward_streams, AgentEpisodeBuffer, EnvironmentalEpisode, RolloutError, TransitionRecord};

const ACTION_STREAM: u64 = 1;
const LCF_STREAM: u64 = 2;
const EPISODE_STREAM: u64 = 3;

/// Policy input: the observation, followed by the normalized coordination factor when it
/// is fed to the policy.
pub fn policy_input(obs: &[f64], phi: f64, feed_phi: bool) -> Vec<f64> {
    let mut v = obs.to_vec();
    if feed_phi {
        v.push(phi / FRAC_PI_2);
    }
    v
}

pub(crate) fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(base) ^ a) ^ b.rotate_left(32))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollectorConfig {
    pub n_envs: usize,
    pub seed: u64,
    pub sim: SimConfig,
    pub neighborhood_radius: f64,
    pub feed_phi: bool,
    pub critic: CriticSpec,
}

/// Read-only networks used for acting.
#[derive(Clone, Copy)]
pub struct BehaviorNets<'a> {
    pub policy: &'a ParamSet,
    /// Indexed by [`super::Stream`].
    pub values: [&'a ParamSet; 3],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CollectStats {
    pub transitions: usize,
    /// Simulator ticks summed over environments.
    pub env_steps: usize,
    pub successes: usize,
    pub crashes: usize,
    pub out_of_road: usize,
    pub truncated: usize,
    pub reward_sum: f64,
}

impl CollectStats {
    pub fn merge(&mut self, o: &Self) {
        self.transitions += o.transitions;
        self.env_steps += o.env_steps;
        self.successes += o.successes;
        self.crashes += o.crashes;
        self.out_of_road += o.out_of_road;
        self.truncated += o.truncated;
        self.reward_sum += o.reward_sum;
    }

    pub fn finished_agents(&self) -> usize {
        self.successes + self.crashes + self.out_of_road + self.truncated
    }

    pub fn success_rate(&self) -> f64 {
        let n = self.finished_agents();
        if n == 0 { 0.0 } else { self.successes as f64 / n as f64 }
    }

    pub fn efficiency(&self) -> f64 {
        if self.env_steps == 0 {
            0.0
        } else {
            (self.successes as f64 - (self.crashes + self.out_of_road) as f64) / self.env_steps as f64
        }
    }
}

#[derive(Debug, Clone)]
struct EnvSlot {
    index: usize,
    sim: Simulator,
    obs: BTreeMap<AgentId, Observation>,
    lcf: BTreeMap<AgentId, LcfSample>,
    action_rng: ChaCha8Rng,
    lcf_rng: ChaCha8Rng,
    episodes: u64,
    base_seed: u64,
}

/// Owns the simulators; they persist across calls so agent lifetimes may span batches.
#[derive(Debug, Clone)]
pub struct Collector {
    config: CollectorConfig,
    slots: Vec<EnvSlot>,
}

fn value_matrix(rows: &[Vec<f64>]) -> Array2<f64> {
    let dim = rows.first().map_or(0, |r| r.len());
    let mut m = Array2::zeros((rows.len(), dim));
    for (i, r) in rows.iter().enumerate() {
        m.row_mut(i).iter_mut().zip(r).for_each(|(d, s)| *d = *s);
    }
    m
}

fn predict(nets: &BehaviorNets, critic_rows: &[Vec<f64>]) -> Result<Vec<[f64; 3]>, RolloutError> {
    let mut out = vec![[0.0; 3]; critic_rows.len()];
    if critic_rows.is_empty() {
        return Ok(out);
    }
    let x = value_matrix(critic_rows);
    for (k, head) in nets.values.iter().enumerate() {
        let v = head.forward(x.view())?;
        for (i, o) in out.iter_mut().enumerate() {
            o[k] = v[[i, 0]];
        }
    }
    Ok(out)
}

impl EnvSlot {
    fn restart(&mut self) {
        self.episodes += 1;
        let seed = derive_seed(self.base_seed, EPISODE_STREAM, self.episodes);
        self.obs = self.sim.restart(seed);
        self.lcf.clear();
    }

    fn critic_rows(
        spec: &CriticSpec,
        obs: &[&[f64]],
        positions: &[Vec2],
        actions: Option<&[&[f64]]>,
        act_dim: usize,
    ) -> Vec<Vec<f64>> {
        spec.features(obs, positions, actions, act_dim)
    }

    fn collect(
        &mut self,
        share: usize,
        nets: &BehaviorNets,
        dist: &LcfDistribution,
        cfg: &CollectorConfig,
    ) -> Result<(Vec<EnvironmentalEpisode>, CollectStats), RolloutError> {
        let act_dim = nets.policy.output_dim();
        let horizon = self.sim.config().horizon;
        let new_episode = |index| EnvironmentalEpisode { env_index: index, horizon, ..Default::default() };
        let mut episodes = Vec::new();
        let mut episode = new_episode(self.index);
        let mut open: BTreeMap<AgentId, AgentEpisodeBuffer> = BTreeMap::new();
        let mut stats = CollectStats::default();
        let log_std = nets.policy.effective_log_std().expect("policy carries a log-std").to_vec();

        while stats.transitions < share {
            let ids = self.sim.active_ids();
            for &id in &ids {
                if !self.lcf.contains_key(&id) {
                    self.lcf.insert(id, dist.sample(&mut self.lcf_rng));
                }
            }
            let n = ids.len();
            let obs: Vec<&[f64]> = ids.iter().map(|id| self.obs[id].as_slice()).collect();
            let mut x = Array2::zeros((n, nets.policy.input_dim()));
            for (i, id) in ids.iter().enumerate() {
                let pin = policy_input(obs[i], self.lcf[id].phi, cfg.feed_phi);
                x.row_mut(i).iter_mut().zip(&pin).for_each(|(d, s)| *d = *s);
            }
            let means = if n > 0 { nets.policy.forward(x.view())? } else { Array2::zeros((0, act_dim)) };
            let samples: Vec<gaussian::SampledAction> = (0..n)
                .map(|i| gaussian::sample(means.row(i).as_slice().unwrap(), &log_std, &mut self.action_rng))
                .collect();
            let positions: Vec<Vec2> = ids.iter().map(|id| self.sim.vehicle(*id).unwrap().position).collect();
            let executed: Vec<&[f64]> = samples.iter().map(|s| s.clamped.as_slice()).collect();
            let critic = if cfg.critic.is_local() {
                None
            } else {
                Some(Self::critic_rows(&cfg.critic, &obs, &positions, Some(&executed), act_dim))
            };
            let values = match &critic {
                Some(rows) => predict(nets, rows)?,
                None => predict(nets, &obs.iter().map(|o| o.to_vec()).collect::<Vec<_>>())?,
            };
            let actions: BTreeMap<AgentId, KinematicAction> =
                ids.iter().zip(&samples).map(|(&id, s)| (id, KinematicAction::from_slice(&s.clamped))).collect();
            let step = self.sim.current_step() + 1;
            let outcome =
                self.sim.step(&actions).map_err(|source| RolloutError::Step { env: self.index, step, source })?;
            stats.env_steps += 1;

            // values of final observations for agents cut off by the horizon
            let truncated: Vec<AgentId> = outcome
                .results
                .iter()
                .filter(|(_, r)| r.reason == Some(TerminationReason::Truncated))
                .map(|(id, _)| *id)
                .collect();
            let mut final_values: BTreeMap<AgentId, [f64; 3]> = BTreeMap::new();
            if !truncated.is_empty() {
                let fo: Vec<&[f64]> = truncated.iter().map(|id| outcome.observations[id].as_slice()).collect();
                let fp: Vec<Vec2> = truncated.iter().map(|id| outcome.results[id].position).collect();
                let rows = Self::critic_rows(&cfg.critic, &fo, &fp, None, act_dim);
                for (id, v) in truncated.iter().zip(predict(nets, &rows)?) {
                    final_values.insert(*id, v);
                }
            }

            for (i, id) in ids.iter().enumerate() {
                let res = &outcome.results[id];
                let lcf = self.lcf[id];
                let rec = TransitionRecord {
                    agent_id: *id,
                    step: outcome.step,
                    obs: obs[i].to_vec(),
                    action: samples[i].raw.clone(),
                    log_prob: samples[i].log_prob,
                    behavior_mean: means.row(i).to_vec(),
                    behavior_log_std: log_std.clone(),
                    position: res.position,
                    r_individual: res.reward,
                    r_neighborhood: 0.0,
                    r_global: 0.0,
                    done: res.done,
                    values: values[i],
                    lcf_phi: lcf.phi,
                    lcf_eps: lcf.eps,
                    lcf_clamped: lcf.clamped,
                    critic_obs: critic.as_ref().map(|c| c[i].clone()),
                };
                stats.reward_sum += res.reward;
                let buf = open.entry(*id).or_insert_with(|| AgentEpisodeBuffer {
                    agent_id: *id,
                    records: Vec::new(),
                    reason: None,
                    bootstrap: [0.0; 3],
                });
                buf.records.push(rec);
                if let Some(reason) = res.reason {
                    match reason {
                        TerminationReason::Success => stats.successes += 1,
                        TerminationReason::Crash => stats.crashes += 1,
                        TerminationReason::OutOfRoad => stats.out_of_road += 1,
                        TerminationReason::Truncated => stats.truncated += 1,
                    }
                    let mut buf = open.remove(id).unwrap();
                    buf.reason = Some(reason);
                    buf.bootstrap = final_values.get(id).copied().unwrap_or([0.0; 3]);
                    episode.buffers.push(buf);
                    self.lcf.remove(id);
                }
            }
            stats.transitions += n;
            let active = self.sim.active_ids();
            self.obs = outcome.observations.into_iter().filter(|(id, _)| active.binary_search(id).is_ok()).collect();

            if self.sim.is_finished() {
                debug_assert!(open.is_empty());
                fill_reward_streams(&mut episode, cfg.neighborhood_radius);
                episodes.push(std::mem::replace(&mut episode, new_episode(self.index)));
                self.restart();
            }
        }

        if !open.is_empty() {
            let ids: Vec<AgentId> = open.keys().copied().collect();
            let obs: Vec<&[f64]> = ids.iter().map(|id| self.obs[id].as_slice()).collect();
            let pos: Vec<Vec2> = ids.iter().map(|id| self.sim.vehicle(*id).unwrap().position).collect();
            let rows = Self::critic_rows(&cfg.critic, &obs, &pos, None, act_dim);
            for (id, v) in ids.iter().zip(predict(nets, &rows)?) {
                let mut buf = open.remove(id).unwrap();
                buf.bootstrap = v;
                episode.buffers.push(buf);
            }
        }
        if !episode.buffers.is_empty() {
            fill_reward_streams(&mut episode, cfg.neighborhood_radius);
            episodes.push(episode);
        }
        Ok((episodes, stats))
    }
}

impl Collector {
    pub fn new(scene: &SceneSpec, config: CollectorConfig) -> Self {
        let slots = (0..config.n_envs.max(1))
            .map(|k| {
                let base_seed = derive_seed(config.seed, k as u64, 0);
                let (sim, obs) = Simulator::reset(scene, config.sim.clone(), derive_seed(base_seed, EPISODE_STREAM, 0));
                EnvSlot {
                    index: k,
                    sim,
                    obs,
                    lcf: BTreeMap::new(),
                    action_rng: ChaCha8Rng::seed_from_u64(derive_seed(base_seed, ACTION_STREAM, 0)),
                    lcf_rng: ChaCha8Rng::seed_from_u64(derive_seed(base_seed, LCF_STREAM, 0)),
                    episodes: 0,
                    base_seed,
                }
            })
            .collect();
        Self { config, slots }
    }

    pub fn config(&self) -> &CollectorConfig {
        &self.config
    }

    /// Overrides the live agent count of every simulator; `None` restores the scene value.
    pub fn set_agent_count(&mut self, count: Option<usize>) {
        for s in &mut self.slots {
            s.sim.set_agent_count(count);
        }
    }

    /// Steps all environments until together they stored at least `batch_target` transitions.
    /// Each environment gets a fixed share, so results do not depend on the thread count.
    pub fn collect(
        &mut self,
        nets: &BehaviorNets,
        dist: &LcfDistribution,
        batch_target: usize,
    ) -> Result<(Vec<EnvironmentalEpisode>, CollectStats), RolloutError> {
        let n = self.slots.len();
        let shares: Vec<usize> = (0..n).map(|k| batch_target / n + usize::from(k < batch_target % n)).collect();
        let cfg = &self.config;
        let results: Vec<_> = self
            .slots
            .par_iter_mut()
            .zip(shares.par_iter())
            .map(|(slot, &share)| slot.collect(share, nets, dist, cfg))
            .collect();
        let mut episodes = Vec::new();
        let mut stats = CollectStats::default();
        for r in results {
            let (e, s) = r?;
            episodes.extend(e);
            stats.merge(&s);
        }
        Ok((episodes, stats))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::builtin;
    use crate::netcore::gaussian::LOG_STD_INIT;
    use crate::trainer::mfpo::CriticKind;

    fn nets(obs_dim: usize, critic_dim: usize) -> (ParamSet, [ParamSet; 3]) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = ParamSet::init(&[obs_dim, 16, 2], Some(LOG_STD_INIT), 0.5, &mut rng);
        let v = [0, 1, 2].map(|_| ParamSet::init(&[critic_dim, 16, 1], None, 1.0, &mut rng));
        (p, v)
    }

    fn config(critic: CriticSpec) -> CollectorConfig {
        CollectorConfig {
            n_envs: 2,
            seed: 3,
            sim: SimConfig { horizon: 150, ..SimConfig::default() },
            neighborhood_radius: 10.0,
            feed_phi: false,
            critic,
        }
    }

    #[test]
    fn collection_invariants() {
        let scene = builtin::mini_intersection();
        let (p, v) = nets(crate::env::OBS_DIM, crate::env::OBS_DIM);
        let behavior = BehaviorNets { policy: &p, values: [&v[0], &v[1], &v[2]] };
        let mut c = Collector::new(&scene, config(CriticSpec::local()));
        let dist = LcfDistribution::new(0.2, 0.5);
        let (eps, stats) = c.collect(&behavior, &dist, 700).unwrap();
        assert!(stats.transitions >= 700);
        let total: usize = eps.iter().map(|e| e.transitions()).sum();
        assert_eq!(total, stats.transitions);
        for e in &eps {
            assert!(e.active_counts.iter().all(|&(_, k)| k <= scene.target_agent_count));
            for b in &e.buffers {
                assert!(b.is_well_formed());
                let phi = b.records[0].lcf_phi;
                assert!(b.records.iter().all(|r| r.lcf_phi == phi));
                let want = dist.phi_from_eps(b.records[0].lcf_eps);
                assert_eq!(phi, want.phi);
                if b.is_terminal() {
                    assert_eq!(b.bootstrap, [0.0; 3]);
                }
            }
        }
    }

    #[test]
    fn zero_sigma_gives_mean_phi() {
        let scene = builtin::mini_intersection();
        let (p, v) = nets(crate::env::OBS_DIM, crate::env::OBS_DIM);
        let behavior = BehaviorNets { policy: &p, values: [&v[0], &v[1], &v[2]] };
        let mut c = Collector::new(&scene, config(CriticSpec::local()));
        let (eps, _) = c.collect(&behavior, &LcfDistribution::fixed(0.4), 300).unwrap();
        assert!(eps.iter().flat_map(|e| &e.buffers).flat_map(|b| &b.records).all(|r| r.lcf_phi == 0.4));
    }

    #[test]
    fn collection_is_deterministic_and_continues_across_calls() {
        let scene = builtin::mini_intersection();
        let spec = CriticSpec { kind: CriticKind::MeanField, k: 4, radius: 10.0, counterfactual: true };
        let dim = spec.input_dim(crate::env::OBS_DIM, 2);
        let (p, v) = nets(crate::env::OBS_DIM, dim);
        let behavior = BehaviorNets { policy: &p, values: [&v[0], &v[1], &v[2]] };
        let run = || {
            let mut c = Collector::new(&scene, config(spec));
            let dist = LcfDistribution::new(0.0, 0.1);
            let a = c.collect(&behavior, &dist, 400).unwrap();
            let b = c.collect(&behavior, &dist, 400).unwrap();
            (a.0, b.0)
        };
        let (a1, b1) = run();
        let (a2, b2) = run();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        assert!(a1.iter().flat_map(|e| &e.buffers).all(|b| b.records[0].critic_obs.as_ref().unwrap().len() == dim));
    }
}
