//! Static scene description and its text format.
//!
//! A scene file is TOML with repeated `[[lane]]`, `[[spawn]]`, `[[destination]]` and
//! `[[obstacle]]` tables. Lengths are meters, angles radians.
//!
//! ```toml
//! name = "corridor"
//! target_agent_count = 2
//!
//! [[lane]]
//! id = 0
//! centerline = [[0.0, 0.0], [120.0, 0.0]]
//! width = 4.0
//!
//! [[spawn]]
//! position = [5.0, 0.0]
//! heading = 0.0
//! lane = 0
//!
//! [[destination]]
//! center = [112.0, 0.0]
//! radius = 5.0
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::geometry::Vec2;
use super::road::RoadNetwork;
use super::{SceneError, VEHICLE_WIDTH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneSpec {
    pub id: u32,
    pub centerline: Vec<Vec2>,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpawnPoint {
    pub position: Vec2,
    pub heading: f64,
    pub lane: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Destination {
    pub center: Vec2,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub center: Vec2,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default)]
    pub name: String,
    pub target_agent_count: usize,
    #[serde(rename = "lane", default)]
    pub lanes: Vec<LaneSpec>,
    #[serde(rename = "spawn", default)]
    pub spawn_points: Vec<SpawnPoint>,
    #[serde(rename = "destination", default)]
    pub destinations: Vec<Destination>,
    #[serde(rename = "obstacle", default)]
    pub static_obstacles: Vec<ObstacleSpec>,
}

impl SceneSpec {
    /// Parses and validates scene text.
    pub fn parse(text: &str) -> Result<Self, SceneError> {
        let scene: SceneSpec = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1));
            SceneError::Parse { line, message: e.message().to_string() }
        })?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("scene is always serializable")
    }

    pub fn lane_index(&self, id: u32) -> Option<usize> {
        self.lanes.iter().position(|l| l.id == id)
    }

    /// Checks every structural invariant, returning the first violation.
    pub fn validate(&self) -> Result<(), SceneError> {
        let invalid = |m: String| Err(SceneError::Invalid(m));
        if self.target_agent_count == 0 {
            return invalid("target_agent_count must be positive".into());
        }
        if self.lanes.is_empty() {
            return invalid("scene needs at least one lane".into());
        }
        if self.spawn_points.is_empty() {
            return invalid("scene needs at least one spawn point".into());
        }
        if self.destinations.is_empty() {
            return invalid("scene needs at least one destination".into());
        }
        for (i, lane) in self.lanes.iter().enumerate() {
            if self.lanes[..i].iter().any(|l| l.id == lane.id) {
                return invalid(format!("duplicate lane id {}", lane.id));
            }
            if !(lane.width.is_finite() && lane.width > VEHICLE_WIDTH) {
                return invalid(format!(
                    "lane {} width {} must exceed vehicle width {}",
                    lane.id, lane.width, VEHICLE_WIDTH
                ));
            }
            if lane.centerline.len() < 2 || lane.centerline.iter().any(|p| !p.is_finite()) {
                return invalid(format!("lane {} needs at least two finite centerline points", lane.id));
            }
        }
        for (i, d) in self.destinations.iter().enumerate() {
            if !(d.center.is_finite() && d.radius.is_finite() && d.radius > 0.0) {
                return invalid(format!("destination {i} needs a finite center and positive radius"));
            }
        }
        for (i, o) in self.static_obstacles.iter().enumerate() {
            if !(o.center.is_finite() && o.heading.is_finite() && o.length > 0.0 && o.width > 0.0) {
                return invalid(format!("obstacle {i} has non-finite pose or non-positive extent"));
            }
        }
        for (i, s) in self.spawn_points.iter().enumerate() {
            if !(s.position.is_finite() && s.heading.is_finite()) {
                return invalid(format!("spawn point {i} has non-finite pose"));
            }
            if self.lane_index(s.lane).is_none() {
                return invalid(format!("spawn point {i} references unknown lane {}", s.lane));
            }
        }
        let road = RoadNetwork::build(self).map_err(SceneError::Invalid)?;
        for (i, s) in self.spawn_points.iter().enumerate() {
            if !road.is_on_road(s.position) {
                return invalid(format!("spawn point {i} at ({}, {}) lies outside the drivable area", s.position.x, s.position.y));
            }
        }
        for (di, d) in self.destinations.iter().enumerate() {
            let reachable = self
                .spawn_points
                .iter()
                .any(|s| road.plan_route(self.lane_index(s.lane).unwrap(), s.position, d).is_some());
            if !reachable {
                return invalid(format!("destination {di} is not reachable from any spawn point"));
            }
        }
        Ok(())
    }
}

/// Reads and validates a scene file.
pub fn load_scene(path: impl AsRef<Path>) -> Result<SceneSpec, SceneError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| SceneError::Io { path: path.display().to_string(), source: e })?;
    SceneSpec::parse(&text)
}
