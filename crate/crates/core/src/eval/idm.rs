//! Intelligent-driver car following with pure-pursuit lane tracking.

use serde::{Deserialize, Serialize};

use crate::env::road::Route;
use crate::env::{AgentId, KinematicAction, SimConfig, Simulator, VehicleState, VEHICLE_LENGTH, WHEELBASE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdmPolicyConfig {
    /// Desired speed, m/s.
    pub desired_speed: f64,
    /// Time headway, s.
    pub time_headway: f64,
    pub max_accel: f64,
    pub comfort_decel: f64,
    /// Minimum bumper-to-bumper gap, m.
    pub min_gap: f64,
    pub exponent: f64,
    /// How far along the route a leader is searched for, m.
    pub lookahead: f64,
}

impl Default for IdmPolicyConfig {
    fn default() -> Self {
        Self {
            desired_speed: 8.0,
            time_headway: 1.5,
            max_accel: 2.0,
            comfort_decel: 4.0,
            min_gap: 2.0,
            exponent: 4.0,
            lookahead: 50.0,
        }
    }
}

impl IdmPolicyConfig {
    pub fn validate(&self) -> Result<(), String> {
        let pos = [self.desired_speed, self.time_headway, self.max_accel, self.comfort_decel, self.min_gap, self.lookahead];
        if pos.iter().any(|v| !(*v > 0.0)) {
            return Err("IDM parameters must be positive".into());
        }
        if !(self.exponent >= 1.0) {
            return Err("IDM exponent must be at least 1".into());
        }
        Ok(())
    }
}

/// Vehicle ahead on the ego route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leader {
    /// Bumper-to-bumper distance, m.
    pub gap: f64,
    pub speed: f64,
}

/// Desired dynamic gap `s*`.
pub fn desired_gap(speed: f64, closing_speed: f64, cfg: &IdmPolicyConfig) -> f64 {
    cfg.min_gap + speed * cfg.time_headway + speed * closing_speed / (2.0 * (cfg.max_accel * cfg.comfort_decel).sqrt())
}

/// Acceleration in m/s².
pub fn idm_acceleration(speed: f64, leader: Option<Leader>, cfg: &IdmPolicyConfig) -> f64 {
    let free = 1.0 - (speed / cfg.desired_speed).powf(cfg.exponent);
    let interaction = leader.map_or(0.0, |l| {
        let s_star = desired_gap(speed, speed - l.speed, cfg).max(0.0);
        let s = l.gap.max(1e-3);
        (s_star / s).powi(2)
    });
    cfg.max_accel * (free - interaction)
}

/// Normalized acceleration command for the simulator's asymmetric limits.
pub fn accel_command(accel: f64, sim: &SimConfig) -> f64 {
    let c = if accel >= 0.0 { accel / sim.max_accel } else { accel / sim.max_brake };
    c.clamp(-1.0, 1.0)
}

/// Pure-pursuit steering command towards a point ahead on the route.
pub fn pursuit_steer(ego: &VehicleState, route: &Route, sim: &SimConfig) -> f64 {
    let lookahead = 4.0 + 0.8 * ego.speed;
    let s = route.path.project(ego.position).s;
    let (target, _) = route.path.point_at(s + lookahead);
    let to = target - ego.position;
    let alpha = to.angle() - ego.heading;
    let dist = to.norm().max(1e-6);
    let delta = (2.0 * WHEELBASE * alpha.sin() / dist).atan();
    (delta / sim.max_steer).clamp(-1.0, 1.0)
}

pub fn idm_action(ego: &VehicleState, route: &Route, leader: Option<Leader>, cfg: &IdmPolicyConfig, sim: &SimConfig) -> KinematicAction {
    let accel = accel_command(idm_acceleration(ego.speed, leader, cfg), sim);
    KinematicAction::new(pursuit_steer(ego, route, sim), accel)
}

/// Nearest live or dead vehicle whose center lies on the ego route, ahead, within the lookahead.
pub fn find_leader(sim: &Simulator, id: AgentId, cfg: &IdmPolicyConfig) -> Option<Leader> {
    let ego = sim.vehicle(id)?;
    let route = sim.route(id)?;
    let s_ego = route.path.project(ego.position).s;
    let others = sim.vehicles().filter(|v| v.agent_id != id).chain(sim.dead_vehicles().iter());
    let mut best: Option<Leader> = None;
    for v in others {
        if v.position.distance(ego.position) > cfg.lookahead + VEHICLE_LENGTH {
            continue;
        }
        let p = route.path.project(v.position);
        let ahead = p.s - s_ego;
        if ahead <= 0.0 || ahead > cfg.lookahead || p.lateral.abs() > 0.5 * (ego.width + v.width) {
            continue;
        }
        let gap = ahead - 0.5 * (ego.length + v.length);
        let speed = if v.end_step.is_some() { 0.0 } else { v.speed };
        if best.is_none_or(|b| gap < b.gap) {
            best = Some(Leader { gap, speed });
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_road_equilibrium() {
        let cfg = IdmPolicyConfig::default();
        assert!(idm_acceleration(cfg.desired_speed, None, &cfg).abs() < 1e-12);
        assert!(idm_acceleration(0.0, None, &cfg) == cfg.max_accel);
    }

    #[test]
    fn stopped_leader_at_min_gap_brakes_fully() {
        let cfg = IdmPolicyConfig::default();
        let a = idm_acceleration(6.0, Some(Leader { gap: cfg.min_gap, speed: 0.0 }), &cfg);
        assert_eq!(accel_command(a, &SimConfig::default()), -1.0);
    }

    #[test]
    fn scale_consistent_interaction() {
        let cfg = IdmPolicyConfig::default();
        let base = IdmPolicyConfig { min_gap: 3.0, time_headway: 1.0, ..cfg };
        let doubled = IdmPolicyConfig { min_gap: 6.0, time_headway: 2.0, ..base };
        let v = 5.0;
        let l = Leader { gap: 10.0, speed: 5.0 };
        let term = |c: &IdmPolicyConfig, gap: f64| {
            let free = c.max_accel * (1.0 - (v / c.desired_speed).powf(c.exponent));
            free - idm_acceleration(v, Some(Leader { gap, ..l }), c)
        };
        let r1 = term(&base, 10.0) / base.max_accel;
        let r2 = term(&doubled, 20.0) / doubled.max_accel;
        assert!((r1 - r2).abs() < 1e-12);
    }

    #[test]
    fn validate_rejects_bad_exponent() {
        assert!(IdmPolicyConfig { exponent: 0.5, ..Default::default() }.validate().is_err());
        IdmPolicyConfig::default().validate().unwrap();
    }
}
