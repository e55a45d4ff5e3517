//! Neighbor-augmented critic inputs for the mean-field baselines. Only value heads see
//! these features; the policy always receives the local observation.

use serde::{Deserialize, Serialize};

use crate::env::spatial::neighbors_within;
use crate::env::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticKind {
    Local,
    /// Observations of the `k` nearest agents, nearest first, zero-padded.
    ConcatNearest,
    /// Mean observation over neighbors within the radius.
    MeanField,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticSpec {
    pub kind: CriticKind,
    pub k: usize,
    pub radius: f64,
    /// Append neighbor actions in the same layout as the observation block.
    pub counterfactual: bool,
}

impl CriticSpec {
    pub fn local() -> Self {
        Self { kind: CriticKind::Local, k: 4, radius: 10.0, counterfactual: false }
    }

    pub fn is_local(&self) -> bool {
        self.kind == CriticKind::Local
    }

    pub fn input_dim(&self, obs_dim: usize, act_dim: usize) -> usize {
        let blocks = match self.kind {
            CriticKind::Local => return obs_dim,
            CriticKind::ConcatNearest => self.k,
            CriticKind::MeanField => 1,
        };
        obs_dim + blocks * (obs_dim + if self.counterfactual { act_dim } else { 0 })
    }

    /// Critic input for every agent of one tick. `actions` of `None` yields zero action
    /// blocks, used for bootstrap states where no action was taken.
    pub fn features(&self, obs: &[&[f64]], positions: &[Vec2], actions: Option<&[&[f64]]>, act_dim: usize) -> Vec<Vec<f64>> {
        let n = obs.len();
        let obs_dim = obs.first().map_or(0, |o| o.len());
        let dim = self.input_dim(obs_dim, act_dim);
        let action_of = |j: usize| actions.map(|a| a[j]);
        match self.kind {
            CriticKind::Local => obs.iter().map(|o| o.to_vec()).collect(),
            CriticKind::ConcatNearest => (0..n)
                .map(|i| {
                    let mut others: Vec<(f64, usize)> =
                        (0..n).filter(|&j| j != i).map(|j| (positions[i].distance(positions[j]), j)).collect();
                    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    let mut f = Vec::with_capacity(dim);
                    f.extend_from_slice(obs[i]);
                    for slot in 0..self.k {
                        match others.get(slot) {
                            Some(&(_, j)) => f.extend_from_slice(obs[j]),
                            None => f.extend(std::iter::repeat_n(0.0, obs_dim)),
                        }
                    }
                    if self.counterfactual {
                        for slot in 0..self.k {
                            match others.get(slot).and_then(|&(_, j)| action_of(j)) {
                                Some(a) => f.extend_from_slice(a),
                                None => f.extend(std::iter::repeat_n(0.0, act_dim)),
                            }
                        }
                    }
                    f
                })
                .collect(),
            CriticKind::MeanField => {
                let nb = neighbors_within(positions, self.radius);
                (0..n)
                    .map(|i| {
                        let mut f = Vec::with_capacity(dim);
                        f.extend_from_slice(obs[i]);
                        let mut mean_obs = vec![0.0; obs_dim];
                        let mut mean_act = vec![0.0; act_dim];
                        for &j in &nb[i] {
                            mean_obs.iter_mut().zip(obs[j]).for_each(|(m, v)| *m += v);
                            if let Some(a) = action_of(j) {
                                mean_act.iter_mut().zip(a).for_each(|(m, v)| *m += v);
                            }
                        }
                        if !nb[i].is_empty() {
                            let inv = 1.0 / nb[i].len() as f64;
                            mean_obs.iter_mut().for_each(|m| *m *= inv);
                            mean_act.iter_mut().for_each(|m| *m *= inv);
                        }
                        f.extend(mean_obs);
                        if self.counterfactual {
                            f.extend(mean_act);
                        }
                        f
                    })
                    .collect()
            }
        }
    }
}
