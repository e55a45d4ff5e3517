//! Experience collection and post-processing: agent episode slicing, the individual,
//! neighborhood and global reward streams, advantage estimation and minibatching.

mod batch;
mod collect;
mod gae;
mod rewards;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{AgentId, StepError, TerminationReason, Vec2};
use crate::netcore::NetError;

pub use batch::{build_batch, GaeConfig, SampleBatch};
pub(crate) use collect::derive_seed;
pub use collect::{policy_input, BehaviorNets, CollectStats, Collector, CollectorConfig};
pub use gae::compute_gae;
pub use rewards::{fill_reward_streams, global_reward, neighborhood_rewards};

/// The three reward streams, also used to index per-stream arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stream {
    Individual = 0,
    Neighborhood = 1,
    Global = 2,
}

impl Stream {
    pub const ALL: [Stream; 3] = [Stream::Individual, Stream::Neighborhood, Stream::Global];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub agent_id: AgentId,
    pub step: usize,
    pub obs: Vec<f64>,
    /// Unclamped sampled action.
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub behavior_mean: Vec<f64>,
    pub behavior_log_std: Vec<f64>,
    /// Vehicle center after the step, used for neighborhoods.
    pub position: Vec2,
    pub r_individual: f64,
    pub r_neighborhood: f64,
    pub r_global: f64,
    pub done: bool,
    /// Value predictions indexed by [`Stream`].
    pub values: [f64; 3],
    pub lcf_phi: f64,
    pub lcf_eps: f64,
    pub lcf_clamped: bool,
    /// Neighbor-augmented value input; `None` when the value heads read `obs`.
    pub critic_obs: Option<Vec<f64>>,
}

impl TransitionRecord {
    pub fn reward(&self, s: Stream) -> f64 {
        match s {
            Stream::Individual => self.r_individual,
            Stream::Neighborhood => self.r_neighborhood,
            Stream::Global => self.r_global,
        }
    }
}

/// Contiguous records of one agent. A buffer ends at termination or where collection was
/// cut; in the latter case `reason` is `None` and the agent continues in a later buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentEpisodeBuffer {
    pub agent_id: AgentId,
    pub records: Vec<TransitionRecord>,
    pub reason: Option<TerminationReason>,
    /// Value of the state after the last record per stream; 0 for terminal states.
    pub bootstrap: [f64; 3],
}

impl AgentEpisodeBuffer {
    pub fn is_terminal(&self) -> bool {
        self.reason.is_some_and(|r| r != TerminationReason::Truncated)
    }

    /// Steps increase by one and only the last record may be done.
    pub fn is_well_formed(&self) -> bool {
        self.records.windows(2).all(|w| w[1].step == w[0].step + 1 && !w[0].done)
    }
}

/// Buffers of one simulator over a contiguous step range.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnvironmentalEpisode {
    pub env_index: usize,
    pub buffers: Vec<AgentEpisodeBuffer>,
    /// `(step, number of agents with a transition at that step)`.
    pub active_counts: Vec<(usize, usize)>,
    pub horizon: usize,
}

impl EnvironmentalEpisode {
    pub fn transitions(&self) -> usize {
        self.buffers.iter().map(|b| b.records.len()).sum()
    }
}

#[derive(Debug, Error)]
pub enum RolloutError {
    #[error("environment {env} step {step}: {source}")]
    Step { env: usize, step: usize, source: StepError },
    #[error("network evaluation failed: {0}")]
    Net(#[from] NetError),
    #[error("no transitions to build a batch from")]
    EmptyBatch,
}
