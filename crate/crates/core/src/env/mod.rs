//! Deterministic 2D multi-vehicle traffic simulator.
//!
//! Vehicles follow a kinematic bicycle model integrated with explicit Euler steps of
//! [`SimConfig::dt`] seconds. Agents spawn at free spawn points, drive towards a randomly
//! assigned destination along a lane-graph route and terminate on success, crash or leaving
//! the road. Terminated vehicles stay in place as obstacles for [`DEAD_STEPS`] steps.

pub mod builtin;
pub mod geometry;
mod lidar;
pub mod reward;
pub mod road;
pub mod scene;
mod sim;
pub mod spatial;
pub mod trajectory;

use thiserror::Error;

pub use geometry::{OrientedRect, Polyline, Vec2};
pub use reward::RewardConfig;
pub use scene::{load_scene, SceneSpec};
pub use sim::{
    AgentStepResult, KinematicAction, Observation, SimConfig, Simulator, StepOutcome, TerminationReason,
    VehicleState,
};

pub const VEHICLE_LENGTH: f64 = 4.5;
pub const VEHICLE_WIDTH: f64 = 1.8;
pub const WHEELBASE: f64 = 2.5;
pub const LIDAR_RAYS: usize = 72;
/// Steps a terminated vehicle remains as a static obstacle.
pub const DEAD_STEPS: u32 = 10;

pub const EGO_DIM: usize = 5;
pub const NAV_DIM: usize = 4;
pub const OBS_DIM: usize = EGO_DIM + NAV_DIM + LIDAR_RAYS;

/// Stable identifier of one vehicle lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub struct AgentId(pub u32);

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read scene {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("scene parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },
    #[error("invalid scene: {0}")]
    Invalid(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum StepError {
    #[error("no action supplied for active agent {0}")]
    MissingAction(AgentId),
    #[error("action for agent {0} has a non-finite component")]
    NonFiniteAction(AgentId),
    #[error("action supplied for unknown or inactive agent {0}")]
    UnknownAgent(AgentId),
    #[error("episode already reached its horizon")]
    EpisodeFinished,
}
