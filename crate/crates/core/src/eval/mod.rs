//! Population metrics, deterministic evaluation runs, mixed learned/IDM populations and
//! trajectory density maps.

pub mod density;
pub mod idm;

use std::collections::BTreeMap;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::trajectory::TrajectoryRecord;
use crate::env::{AgentId, KinematicAction, SceneSpec, SimConfig, Simulator, StepError, TerminationReason, OBS_DIM};
use crate::netcore::{Checkpoint, NetError, ParamSet};
use crate::rollout::{derive_seed, policy_input};
use crate::trainer::ACTION_DIM;

pub use density::{trajectory_density, DensityGrid, DENSITY_CELL};
pub use idm::{find_leader, idm_acceleration, idm_action, IdmPolicyConfig, Leader};

const EVAL_STREAM: u64 = 4;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("policy expects {found} inputs and {found_out} outputs; the scene needs {expected} inputs (or one more with the coordination factor) and {ACTION_DIM} outputs")]
    DimensionMismatch { expected: usize, found: usize, found_out: usize },
    #[error("IDM fraction must lie in [0, 1), got {0}")]
    BadFraction(f64),
    #[error("invalid IDM configuration: {0}")]
    Idm(String),
    #[error("episode {episode}: {source}")]
    Step { episode: usize, source: StepError },
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Per-agent termination tallies over a number of episodes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episodes: usize,
    /// Environment steps, the `T` of the efficiency formula.
    pub steps: usize,
    pub successes: usize,
    pub crashes: usize,
    pub out_of_road: usize,
    pub truncated: usize,
}

impl EpisodeMetrics {
    pub const CSV_HEADER: &'static str = "episodes,steps,agents,successes,crashes,out_of_road,truncated,success_rate,efficiency,safety";

    pub fn record(&mut self, reason: TerminationReason) {
        match reason {
            TerminationReason::Success => self.successes += 1,
            TerminationReason::Crash => self.crashes += 1,
            TerminationReason::OutOfRoad => self.out_of_road += 1,
            TerminationReason::Truncated => self.truncated += 1,
        }
    }

    pub fn agents(&self) -> usize {
        self.successes + self.crashes + self.out_of_road + self.truncated
    }

    pub fn failures(&self) -> usize {
        self.crashes + self.out_of_road
    }

    pub fn success_rate(&self) -> f64 {
        match self.agents() {
            0 => 0.0,
            n => self.successes as f64 / n as f64,
        }
    }

    /// `(N_success - N_failure) / T`.
    pub fn efficiency(&self) -> f64 {
        match self.steps {
            0 => 0.0,
            t => (self.successes as f64 - self.failures() as f64) / t as f64,
        }
    }

    /// Total crash count; lower is better.
    pub fn safety(&self) -> usize {
        self.crashes
    }

    pub fn merge(&self, o: &Self) -> Self {
        Self {
            episodes: self.episodes + o.episodes,
            steps: self.steps + o.steps,
            successes: self.successes + o.successes,
            crashes: self.crashes + o.crashes,
            out_of_road: self.out_of_road + o.out_of_road,
            truncated: self.truncated + o.truncated,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.episodes,
            self.steps,
            self.agents(),
            self.successes,
            self.crashes,
            self.out_of_road,
            self.truncated,
            self.success_rate(),
            self.efficiency(),
            self.safety()
        )
    }
}

/// Deterministic test-time policy: the Gaussian mean, with the coordination factor appended
/// when the network was trained with it as an input.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPolicy {
    pub params: ParamSet,
    pub phi: Option<f64>,
}

impl EvalPolicy {
    pub fn new(params: ParamSet, phi: Option<f64>) -> Result<Self, EvalError> {
        let want = OBS_DIM + usize::from(phi.is_some());
        if params.input_dim() != want || params.output_dim() != ACTION_DIM {
            return Err(EvalError::DimensionMismatch { expected: OBS_DIM, found: params.input_dim(), found_out: params.output_dim() });
        }
        Ok(Self { params, phi })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, EvalError> {
        ck.validate()?;
        let phi = (ck.policy.input_dim() == OBS_DIM + 1).then_some(ck.lcf_mu);
        Self::new(ck.policy.clone(), phi)
    }

    fn mean_actions(&self, obs: &[&[f64]]) -> Result<Vec<KinematicAction>, EvalError> {
        if obs.is_empty() {
            return Ok(Vec::new());
        }
        let dim = self.params.input_dim();
        let mut x = Array2::zeros((obs.len(), dim));
        for (i, o) in obs.iter().enumerate() {
            let row = policy_input(o, self.phi.unwrap_or(0.0), self.phi.is_some());
            x.row_mut(i).assign(&ndarray::ArrayView1::from(&row[..]));
        }
        let y = self.params.forward(x.view())?;
        Ok(y.rows().into_iter().map(|r| KinematicAction::new(r[0], r[1]).clamped()).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub episodes: usize,
    pub seed: u64,
    /// Overrides the scene's live agent count.
    pub initial_agents: Option<usize>,
    /// Share of spawns driven by the IDM controller, in `[0, 1)`.
    pub idm_fraction: f64,
    pub idm: IdmPolicyConfig,
    pub record_trajectories: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { episodes: 10, seed: 0, initial_agents: None, idm_fraction: 0.0, idm: IdmPolicyConfig::default(), record_trajectories: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeReport {
    /// Tallies over learned agents only.
    pub metrics: EpisodeMetrics,
    pub spawns: usize,
    pub learned_spawns: usize,
    pub trajectory: Vec<TrajectoryRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub metrics: EpisodeMetrics,
    pub episodes: Vec<EpisodeReport>,
}

/// Whether the `k`-th spawn (1-based) of an episode is controlled by the learned policy, so that
/// exactly `round((1 - f) k)` of the first `k` spawns are learned.
pub fn is_learned_spawn(k: usize, idm_fraction: f64) -> bool {
    let share = 1.0 - idm_fraction;
    (share * k as f64).round() > (share * (k - 1) as f64).round()
}

/// Runs `opts.episodes` episodes with every agent on the learned policy.
pub fn evaluate(policy: &EvalPolicy, scene: &SceneSpec, sim: &SimConfig, opts: &EvalOptions) -> Result<EvalReport, EvalError> {
    run(policy, scene, sim, &EvalOptions { idm_fraction: 0.0, ..opts.clone() })
}

/// Like [`evaluate`] with a share of the spawns driven by the IDM controller. Metrics cover the
/// learned agents only.
pub fn mixed_population_eval(policy: &EvalPolicy, scene: &SceneSpec, sim: &SimConfig, opts: &EvalOptions) -> Result<EvalReport, EvalError> {
    if !(0.0..1.0).contains(&opts.idm_fraction) {
        return Err(EvalError::BadFraction(opts.idm_fraction));
    }
    run(policy, scene, sim, opts)
}

fn run(policy: &EvalPolicy, scene: &SceneSpec, sim: &SimConfig, opts: &EvalOptions) -> Result<EvalReport, EvalError> {
    opts.idm.validate().map_err(EvalError::Idm)?;
    let mut cfg = sim.clone();
    if opts.initial_agents.is_some() {
        cfg.agent_count = opts.initial_agents;
    }
    let episodes = (0..opts.episodes)
        .into_par_iter()
        .map(|e| run_episode(policy, scene, &cfg, opts, e))
        .collect::<Result<Vec<_>, _>>()?;
    let metrics = episodes.iter().fold(EpisodeMetrics::default(), |acc, r| acc.merge(&r.metrics));
    Ok(EvalReport { metrics, episodes })
}

#[derive(Default)]
struct Roster {
    fraction: f64,
    learned: BTreeMap<AgentId, bool>,
    spawn_of: BTreeMap<AgentId, usize>,
    spawns: usize,
    learned_spawns: usize,
}

impl Roster {
    fn register(&mut self, sim: &Simulator, id: AgentId) {
        self.spawns += 1;
        let l = is_learned_spawn(self.spawns, self.fraction);
        self.learned_spawns += usize::from(l);
        self.learned.insert(id, l);
        if let Some(v) = sim.vehicle(id) {
            self.spawn_of.insert(id, v.spawn_index);
        }
    }
}

fn run_episode(policy: &EvalPolicy, scene: &SceneSpec, cfg: &SimConfig, opts: &EvalOptions, episode: usize) -> Result<EpisodeReport, EvalError> {
    let seed = derive_seed(opts.seed, EVAL_STREAM, episode as u64);
    let (mut sim, mut obs) = Simulator::reset(scene, cfg.clone(), seed);
    let mut roster = Roster { fraction: opts.idm_fraction, ..Default::default() };
    for &id in obs.keys() {
        roster.register(&sim, id);
    }
    let mut metrics = EpisodeMetrics { episodes: 1, ..Default::default() };
    let mut trajectory = Vec::new();
    while !sim.is_finished() {
        let ids = sim.active_ids();
        let (learned_ids, idm_ids): (Vec<AgentId>, Vec<AgentId>) = ids.iter().partition(|id| roster.learned[id]);
        let inputs: Vec<&[f64]> = learned_ids.iter().map(|id| obs[id].as_slice()).collect();
        let mut actions: BTreeMap<AgentId, KinematicAction> =
            learned_ids.iter().copied().zip(policy.mean_actions(&inputs)?).collect();
        for id in idm_ids {
            let (v, route) = (sim.vehicle(id).unwrap(), sim.route(id).unwrap());
            actions.insert(id, idm_action(v, route, find_leader(&sim, id, &opts.idm), &opts.idm, sim.config()));
        }
        let out = sim.step(&actions).map_err(|source| EvalError::Step { episode, source })?;
        for (id, r) in &out.results {
            if let (Some(reason), true) = (r.reason, roster.learned[id]) {
                metrics.record(reason);
            }
        }
        if opts.record_trajectories {
            trajectory.extend(TrajectoryRecord::from_outcome(&out, |id| roster.spawn_of.get(&id).copied()));
        }
        for &id in &out.spawned {
            roster.register(&sim, id);
        }
        obs = out.observations;
    }
    metrics.steps = sim.current_step();
    Ok(EpisodeReport { metrics, spawns: roster.spawns, learned_spawns: roster.learned_spawns, trajectory })
}
