use std::collections::BTreeMap;

use crate::env::spatial::neighbors_within;
use crate::env::Vec2;

use super::EnvironmentalEpisode;

/// Mean reward of the other agents within `radius` of each agent; 0 without neighbors.
pub fn neighborhood_rewards(positions: &[Vec2], rewards: &[f64], radius: f64) -> Vec<f64> {
    neighbors_within(positions, radius)
        .iter()
        .map(|nb| if nb.is_empty() { 0.0 } else { nb.iter().map(|&j| rewards[j]).sum::<f64>() / nb.len() as f64 })
        .collect()
}

/// Mean reward over all agents active at one step.
pub fn global_reward(rewards: &[f64]) -> f64 {
    if rewards.is_empty() {
        0.0
    } else {
        rewards.iter().sum::<f64>() / rewards.len() as f64
    }
}

/// Fills the neighborhood and global streams of every record, grouping records by step.
pub fn fill_reward_streams(episode: &mut EnvironmentalEpisode, radius: f64) {
    let mut by_step: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for (b, buf) in episode.buffers.iter().enumerate() {
        for (r, rec) in buf.records.iter().enumerate() {
            by_step.entry(rec.step).or_default().push((b, r));
        }
    }
    episode.active_counts.clear();
    for (&step, members) in &by_step {
        let positions: Vec<Vec2> = members.iter().map(|&(b, r)| episode.buffers[b].records[r].position).collect();
        let rewards: Vec<f64> = members.iter().map(|&(b, r)| episode.buffers[b].records[r].r_individual).collect();
        let rn = neighborhood_rewards(&positions, &rewards, radius);
        let rg = global_reward(&rewards);
        for (k, &(b, r)) in members.iter().enumerate() {
            let rec = &mut episode.buffers[b].records[r];
            rec.r_neighborhood = rn[k];
            rec.r_global = rg;
        }
        episode.active_counts.push((step, members.len()));
    }
}
