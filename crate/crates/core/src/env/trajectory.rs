//! JSON-lines trajectory export, one record per agent per step.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::sim::{StepOutcome, TerminationReason};
use super::AgentId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub agent_id: AgentId,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub reward: f64,
    pub done_reason: Option<TerminationReason>,
    /// Spawn point index, used to group trajectories by origin when plotting.
    #[serde(default)]
    pub spawn: Option<usize>,
}

impl TrajectoryRecord {
    pub fn from_outcome(out: &StepOutcome, spawn_of: impl Fn(AgentId) -> Option<usize>) -> Vec<Self> {
        out.results
            .iter()
            .map(|(&id, r)| Self {
                step: out.step,
                agent_id: id,
                x: r.position.x,
                y: r.position.y,
                heading: r.heading,
                speed: r.speed,
                reward: r.reward,
                done_reason: r.reason,
                spawn: spawn_of(id),
            })
            .collect()
    }
}

pub struct TrajectoryWriter<W: Write> {
    out: W,
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write(&mut self, rec: &TrajectoryRecord) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, rec)?;
        self.out.write_all(b"\n")
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Reads every record, reporting the 1-based line of the first malformed one.
pub fn read_records(input: impl BufRead) -> Result<Vec<TrajectoryRecord>, String> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?);
    }
    Ok(out)
}
