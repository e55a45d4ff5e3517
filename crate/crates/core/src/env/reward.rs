use serde::{Deserialize, Serialize};

use super::sim::TerminationReason;

/// Dense progress reward plus sparse terminal bonus or penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    /// Reward per meter of progress along the route.
    pub progress_coeff: f64,
    pub success_reward: f64,
    pub failure_penalty: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { progress_coeff: 1.0, success_reward: 10.0, failure_penalty: 5.0 }
    }
}

impl RewardConfig {
    pub fn compute(&self, progress: f64, reason: Option<TerminationReason>) -> f64 {
        let terminal = match reason {
            Some(TerminationReason::Success) => self.success_reward,
            Some(TerminationReason::Crash | TerminationReason::OutOfRoad) => -self.failure_penalty,
            Some(TerminationReason::Truncated) | None => 0.0,
        };
        self.progress_coeff * progress + terminal
    }
}
