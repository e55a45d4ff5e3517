//! Independent PPO, mean-field critics, curriculum and coordinated policy optimization with
//! a meta-learned coordination-factor distribution.

mod config;
pub mod lcf;
pub mod losses;
pub mod meta;
pub mod mfpo;

use std::io::Write;

use ndarray::Axis;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::env::{SceneSpec, SimConfig, OBS_DIM};
use crate::netcore::gaussian::LOG_STD_INIT;
use crate::netcore::{Adam, Checkpoint, NetError, ParamSet};
use crate::rollout::{
    build_batch, derive_seed, BehaviorNets, CollectStats, Collector, CollectorConfig, GaeConfig, RolloutError, SampleBatch,
    Stream,
};

pub use config::{curriculum_schedule, Algorithm, TrainerConfig};
pub use lcf::{coordinated_advantage, LcfDistribution};
use losses::{ppo_policy_loss, value_loss, PolicyBatch, PolicyLossConfig};
use meta::{global_surrogate_grad, lcf_gradient_from, LcfBatch};

pub const ACTION_DIM: usize = 2;

const INIT_STREAM: u64 = 100;
const SHUFFLE_STREAM: u64 = 200;
const RESUME_STREAM: u64 = 300;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid trainer configuration: {0}")]
    Config(String),
    #[error("importance ratio is not finite for sample {index}")]
    NonFiniteRatio { index: usize },
    #[error("coordination-factor noise missing from batch")]
    MissingLcfNoise,
    #[error("old and new policy parameters have different shapes")]
    ShapeMismatch,
    #[error("checkpoint does not match the configured networks: {0}")]
    CheckpointMismatch(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_losses: [f64; 3],
    pub mean_kl: f64,
    pub clip_fraction: f64,
    pub lcf_grad: (f64, f64),
    pub skipped_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationStats {
    pub iteration: usize,
    /// Cumulative agent transitions.
    pub env_steps: u64,
    pub success_rate: f64,
    pub efficiency: f64,
    pub safety: usize,
    pub mean_reward: f64,
    pub mean_kl: f64,
    pub clip_fraction: f64,
    pub phi_mu: f64,
    pub phi_sigma: f64,
    pub policy_loss: f64,
    pub value_losses: [f64; 3],
    pub lcf_grad_mu: f64,
}

impl IterationStats {
    pub const CSV_HEADER: &'static str = "iteration,env_steps,success_rate,efficiency,safety,mean_reward,mean_kl,clip_frac,phi_mu,phi_sigma,policy_loss,value_loss_individual,value_loss_neighborhood,value_loss_global,lcf_grad_mu";

    pub fn write_csv_row(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.env_steps,
            self.success_rate,
            self.efficiency,
            self.safety,
            self.mean_reward,
            self.mean_kl,
            self.clip_fraction,
            self.phi_mu,
            self.phi_sigma,
            self.policy_loss,
            self.value_losses[0],
            self.value_losses[1],
            self.value_losses[2],
            self.lcf_grad_mu
        )
    }
}

/// Training coordinator: owns all parameters, optimizers and the environments.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainerConfig,
    scene: SceneSpec,
    pub policy: ParamSet,
    /// Individual, neighborhood and global value heads.
    pub values: [ParamSet; 3],
    optimizers: [Adam; 4],
    pub lcf: LcfDistribution,
    collector: Collector,
    shuffle_rng: ChaCha8Rng,
    iteration: usize,
    env_steps: u64,
    total_iterations: usize,
}

fn clip_norm(g: &mut ParamSet, max: Option<f64>) {
    if let Some(max) = max {
        let norm = g.dot(g).sqrt();
        if norm > max {
            g.scale(max / norm);
        }
    }
}

fn apply(opt: &mut Adam, p: &mut ParamSet, g: &ParamSet, lr: f64) -> bool {
    let mut flat = p.flatten();
    match opt.step(&mut flat, &g.flatten(), lr) {
        Ok(()) => {
            p.assign(&flat).expect("same shape");
            true
        }
        Err(e) => {
            log::warn!("optimizer step skipped: {e}");
            false
        }
    }
}

impl Trainer {
    pub fn new(scene: &SceneSpec, config: TrainerConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let critic = config.algorithm.critic_spec(config.mfpo_k, config.mfpo_radius);
        let policy_in = OBS_DIM + usize::from(config.feed_phi_to_policy);
        let critic_in = critic.input_dim(OBS_DIM, ACTION_DIM);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, INIT_STREAM, 0));
        let sizes = |input: usize, out: usize| {
            let mut s = vec![input];
            s.extend(&config.hidden);
            s.push(out);
            s
        };
        let policy = ParamSet::init(&sizes(policy_in, ACTION_DIM), Some(LOG_STD_INIT), 0.01, &mut rng);
        let values = [0, 1, 2].map(|_| ParamSet::init(&sizes(critic_in, 1), None, 1.0, &mut rng));
        let optimizers = [
            Adam::new(policy.num_params()),
            Adam::new(values[0].num_params()),
            Adam::new(values[1].num_params()),
            Adam::new(values[2].num_params()),
        ];
        let lcf = if !config.algorithm.is_copo() {
            LcfDistribution::fixed(0.0)
        } else if config.lcf_init_std == 0.0 {
            LcfDistribution::fixed(config.lcf_init_mean)
        } else {
            LcfDistribution::new(config.lcf_init_mean, config.lcf_init_std)
        };
        let collector = Collector::new(scene, Self::collector_config(&config, config.seed));
        let total_iterations = 1_000_000usize.div_ceil(config.batch);
        Ok(Self {
            shuffle_rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, SHUFFLE_STREAM, 0)),
            config,
            scene: scene.clone(),
            policy,
            values,
            optimizers,
            lcf,
            collector,
            iteration: 0,
            env_steps: 0,
            total_iterations,
        })
    }

    fn collector_config(config: &TrainerConfig, seed: u64) -> CollectorConfig {
        CollectorConfig {
            n_envs: config.n_envs,
            seed,
            sim: SimConfig { horizon: config.horizon, reward: config.reward, ..SimConfig::default() },
            neighborhood_radius: config.neighborhood_radius,
            feed_phi: config.feed_phi_to_policy,
            critic: config.algorithm.critic_spec(config.mfpo_k, config.mfpo_radius),
        }
    }

    /// Restores parameters, optimizer state and progress. Environments restart from a seed
    /// derived from the stored iteration.
    pub fn from_checkpoint(scene: &SceneSpec, config: TrainerConfig, ck: &Checkpoint) -> Result<Self, TrainError> {
        let mut t = Self::new(scene, config)?;
        ck.validate()?;
        if ck.algorithm != t.config.algorithm.name() {
            return Err(TrainError::CheckpointMismatch(format!(
                "checkpoint algorithm {} differs from configured {}",
                ck.algorithm, t.config.algorithm
            )));
        }
        if ck.policy.shapes() != t.policy.shapes() || (0..3).any(|k| ck.values[k].shapes() != t.values[k].shapes()) {
            return Err(TrainError::CheckpointMismatch("layer shapes differ".into()));
        }
        if ck.optimizers.len() != 4 {
            return Err(TrainError::CheckpointMismatch("expected four optimizer states".into()));
        }
        t.policy = ck.policy.clone();
        t.values = ck.values.clone();
        t.optimizers = [0, 1, 2, 3].map(|k| ck.optimizers[k].clone());
        t.lcf = LcfDistribution { mu: ck.lcf_mu, sigma: ck.lcf_sigma };
        t.iteration = ck.iteration;
        t.env_steps = ck.env_steps;
        let seed = derive_seed(t.config.seed, RESUME_STREAM, ck.iteration as u64);
        t.collector = Collector::new(scene, Self::collector_config(&t.config, seed));
        t.shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(t.config.seed, SHUFFLE_STREAM, ck.iteration as u64));
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(
            self.config.algorithm.name(),
            self.iteration,
            self.env_steps,
            self.policy.clone(),
            self.values.clone(),
            (self.lcf.mu, self.lcf.sigma),
            self.optimizers.to_vec(),
        )
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    /// Length of the whole run, used by the curriculum schedule.
    pub fn set_total_iterations(&mut self, n: usize) {
        self.total_iterations = n.max(1);
    }

    fn trained_heads(&self) -> &'static [usize] {
        if self.config.algorithm.is_copo() {
            &[0, 1, 2]
        } else {
            &[0]
        }
    }

    /// Collects one batch with the current policy and updates every network on it.
    pub fn train_iteration(&mut self) -> Result<IterationStats, TrainError> {
        if self.config.algorithm == Algorithm::Curriculum {
            let n = curriculum_schedule(self.iteration, self.total_iterations, self.scene.target_agent_count);
            self.collector.set_agent_count(Some(n));
        }
        let (episodes, cstats) = {
            let nets = BehaviorNets {
                policy: &self.policy,
                values: [&self.values[0], &self.values[1], &self.values[2]],
            };
            self.collector.collect(&nets, &self.lcf, self.config.batch)?
        };
        let gae = GaeConfig {
            gammas: [self.config.gamma_individual, self.config.gamma_neighborhood, self.config.gamma_global],
            lambda: self.config.lambda,
        };
        let batch = build_batch(&episodes, &gae, self.config.normalize_advantages, self.config.feed_phi_to_policy)?;
        let u = self.update_on_batch(&batch)?;
        self.iteration += 1;
        self.env_steps += cstats.transitions as u64;
        Ok(self.stats(&cstats, &u))
    }

    fn stats(&self, c: &CollectStats, u: &UpdateStats) -> IterationStats {
        IterationStats {
            iteration: self.iteration,
            env_steps: self.env_steps,
            success_rate: c.success_rate(),
            efficiency: c.efficiency(),
            safety: c.crashes,
            mean_reward: if c.transitions == 0 { 0.0 } else { c.reward_sum / c.transitions as f64 },
            mean_kl: u.mean_kl,
            clip_fraction: u.clip_fraction,
            phi_mu: self.lcf.mu,
            phi_sigma: self.lcf.sigma,
            policy_loss: u.policy_loss,
            value_losses: u.value_losses,
            lcf_grad_mu: u.lcf_grad.0,
        }
    }

    /// Policy advantage column: coordinated for CoPO, individual otherwise.
    fn policy_advantages(&self, batch: &SampleBatch) -> Vec<f64> {
        let a_i = &batch.advantages[Stream::Individual.index()];
        if !self.config.algorithm.is_copo() {
            return a_i.clone();
        }
        let a_n = &batch.advantages[Stream::Neighborhood.index()];
        (0..batch.len()).map(|k| coordinated_advantage(a_i[k], a_n[k], batch.phi[k])).collect()
    }

    /// `K_p` minibatch epochs on the policy and value heads, then (CoPO only) `K_Phi`
    /// full-batch ascent steps on the coordination-factor distribution.
    pub fn update_on_batch(&mut self, batch: &SampleBatch) -> Result<UpdateStats, TrainError> {
        let theta_old = self.policy.clone();
        let adv = self.policy_advantages(batch);
        let loss_cfg = PolicyLossConfig {
            clip: self.config.clip,
            kl_coeff: self.config.kl_coeff,
            entropy_coeff: self.config.entropy_coeff,
        };
        let mut stats = UpdateStats::default();
        let mut n_updates = 0usize;
        for _ in 0..self.config.policy_epochs {
            for mb in batch.minibatches(self.config.minibatch, &mut self.shuffle_rng) {
                let obs = batch.policy_obs.select(Axis(0), &mb);
                let actions = batch.actions.select(Axis(0), &mb);
                let bm = batch.behavior_mean.select(Axis(0), &mb);
                let bs = batch.behavior_log_std.select(Axis(0), &mb);
                let logp: Vec<f64> = mb.iter().map(|&i| batch.log_probs[i]).collect();
                let a: Vec<f64> = mb.iter().map(|&i| adv[i]).collect();
                let pb = PolicyBatch {
                    obs: obs.view(),
                    actions: actions.view(),
                    behavior_log_probs: &logp,
                    behavior_mean: bm.view(),
                    behavior_log_std: bs.view(),
                    advantages: &a,
                };
                let mut out = ppo_policy_loss(&self.policy, &pb, &loss_cfg)?;
                clip_norm(&mut out.grad, self.config.max_grad_norm);
                if !apply(&mut self.optimizers[0], &mut self.policy, &out.grad, self.config.lr) {
                    stats.skipped_steps += 1;
                }
                stats.policy_loss += out.loss;
                stats.mean_kl += out.kl;
                stats.clip_fraction += out.clip_fraction;

                let crit = batch.critic_obs.select(Axis(0), &mb);
                for &k in self.trained_heads() {
                    let targets: Vec<f64> = mb.iter().map(|&i| batch.targets[k][i]).collect();
                    let (loss, mut g) = value_loss(&self.values[k], crit.view(), &targets)?;
                    clip_norm(&mut g, self.config.max_grad_norm);
                    if !apply(&mut self.optimizers[k + 1], &mut self.values[k], &g, self.config.lr) {
                        stats.skipped_steps += 1;
                    }
                    stats.value_losses[k] += loss;
                }
                n_updates += 1;
            }
        }
        let inv = 1.0 / n_updates.max(1) as f64;
        stats.policy_loss *= inv;
        stats.mean_kl *= inv;
        stats.clip_fraction *= inv;
        stats.value_losses.iter_mut().for_each(|v| *v *= inv);

        if self.config.algorithm.is_copo() && self.config.update_lcf {
            let full = LcfBatch::from_sample_batch(batch);
            let g1 = global_surrogate_grad(&self.policy, &full, self.config.clip)?;
            for epoch in 0..self.config.lcf_epochs {
                // factors follow the current distribution through the stored noise
                let samples: Vec<_> = batch.eps.iter().map(|&e| self.lcf.phi_from_eps(e)).collect();
                let phi: Vec<f64> = samples.iter().map(|s| s.phi).collect();
                let clamped: Vec<bool> = samples.iter().map(|s| s.clamped).collect();
                let b = LcfBatch { phi: &phi, clamped: &clamped, ..full };
                let g = lcf_gradient_from(&g1, &theta_old, &b)?;
                if epoch == 0 {
                    stats.lcf_grad = (g.d_mu, g.d_sigma);
                }
                self.lcf.ascend((g.d_mu, g.d_sigma), self.config.lcf_lr);
            }
        }
        Ok(stats)
    }
}
