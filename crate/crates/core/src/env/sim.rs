use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::geometry::{wrap_angle, OrientedRect, Vec2};
use super::lidar;
use super::reward::RewardConfig;
use super::road::{RoadNetwork, Route};
use super::scene::SceneSpec;
use super::spatial::{neighbors_within, SpatialHash, DEFAULT_CELL};
use super::{
    AgentId, StepError, DEAD_STEPS, EGO_DIM, LIDAR_RAYS, NAV_DIM, OBS_DIM, VEHICLE_LENGTH, VEHICLE_WIDTH,
    WHEELBASE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    Success,
    Crash,
    OutOfRoad,
    Truncated,
}

impl TerminationReason {
    pub fn is_failure(self) -> bool {
        matches!(self, Self::Crash | Self::OutOfRoad)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Success => "success",
            Self::Crash => "crash",
            Self::OutOfRoad => "out_of_road",
            Self::Truncated => "truncated",
        }
    }
}

/// Normalized steering and acceleration commands in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KinematicAction {
    pub steer: f64,
    pub accel: f64,
}

impl KinematicAction {
    pub fn new(steer: f64, accel: f64) -> Self {
        Self { steer, accel }
    }

    pub fn from_slice(a: &[f64]) -> Self {
        Self { steer: a[0], accel: a[1] }
    }

    pub fn is_finite(&self) -> bool {
        self.steer.is_finite() && self.accel.is_finite()
    }

    pub fn clamped(self) -> Self {
        Self { steer: self.steer.clamp(-1.0, 1.0), accel: self.accel.clamp(-1.0, 1.0) }
    }
}

/// Ego block, navigation block and lidar block, all entries in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation(Vec<f64>);

impl Observation {
    pub fn from_vec(v: Vec<f64>) -> Self {
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn ego(&self) -> &[f64] {
        &self.0[..EGO_DIM]
    }

    pub fn navigation(&self) -> &[f64] {
        &self.0[EGO_DIM..EGO_DIM + NAV_DIM]
    }

    pub fn lidar(&self) -> &[f64] {
        &self.0[EGO_DIM + NAV_DIM..]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub agent_id: AgentId,
    pub position: Vec2,
    pub heading: f64,
    pub speed: f64,
    pub steering: f64,
    pub length: f64,
    pub width: f64,
    pub spawn_step: usize,
    pub end_step: Option<usize>,
    pub dead_timer: u32,
    /// Index of the spawn point this vehicle entered from.
    pub spawn_index: usize,
}

impl VehicleState {
    pub fn body(&self) -> OrientedRect {
        OrientedRect::new(self.position, self.heading, self.length, self.width)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dt: f64,
    pub max_steer: f64,
    pub max_accel: f64,
    pub max_brake: f64,
    pub max_speed: f64,
    pub lidar_range: f64,
    /// Episode length in steps; every live agent is truncated when it is reached.
    pub horizon: usize,
    /// Replaces the scene's target agent count when set.
    pub agent_count: Option<usize>,
    /// Distance of the navigation checkpoint ahead of the vehicle along its route.
    pub checkpoint_lookahead: f64,
    pub spawn_speed: f64,
    pub reward: RewardConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.2,
            max_steer: 0.6,
            max_accel: 3.0,
            max_brake: 5.0,
            max_speed: 15.0,
            lidar_range: 40.0,
            horizon: 1000,
            agent_count: None,
            checkpoint_lookahead: 10.0,
            spawn_speed: 0.0,
            reward: RewardConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
struct Agent {
    state: VehicleState,
    route: Arc<Route>,
    destination: usize,
    progress: f64,
    segment_hint: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentStepResult {
    pub reward: f64,
    pub done: bool,
    pub reason: Option<TerminationReason>,
    /// Vehicle center after the step.
    pub position: Vec2,
    pub heading: f64,
    pub speed: f64,
    /// Arc length covered along the route during this step.
    pub progress: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub step: usize,
    /// One entry per agent that acted this step.
    pub results: BTreeMap<AgentId, AgentStepResult>,
    pub spawned: Vec<AgentId>,
    /// Next observation for every agent that acted (terminal observation when done) and
    /// for every newly spawned agent.
    pub observations: BTreeMap<AgentId, Observation>,
}

type RouteTable = Vec<Vec<Option<Arc<Route>>>>;

/// One simulator instance. Single-threaded; all randomness comes from the seeded generator.
#[derive(Debug, Clone)]
pub struct Simulator {
    scene: Arc<SceneSpec>,
    road: Arc<RoadNetwork>,
    routes: Arc<RouteTable>,
    obstacles: Vec<OrientedRect>,
    config: SimConfig,
    rng: ChaCha8Rng,
    step: usize,
    agents: BTreeMap<AgentId, Agent>,
    dead: Vec<VehicleState>,
    next_id: u32,
    finished: bool,
}

impl Simulator {
    /// Builds the simulator for a validated scene and performs the first reset.
    pub fn reset(scene: &SceneSpec, config: SimConfig, seed: u64) -> (Self, BTreeMap<AgentId, Observation>) {
        let road = RoadNetwork::build(scene).expect("scene was validated");
        let routes: RouteTable = scene
            .spawn_points
            .iter()
            .map(|sp| {
                let lane = scene.lane_index(sp.lane).expect("scene was validated");
                scene
                    .destinations
                    .iter()
                    .map(|d| road.plan_route(lane, sp.position, d).map(Arc::new))
                    .collect()
            })
            .collect();
        let obstacles = scene
            .static_obstacles
            .iter()
            .map(|o| OrientedRect::new(o.center, o.heading, o.length, o.width))
            .collect();
        let mut sim = Self {
            scene: Arc::new(scene.clone()),
            road: Arc::new(road),
            routes: Arc::new(routes),
            obstacles,
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            step: 0,
            agents: BTreeMap::new(),
            dead: Vec::new(),
            next_id: 0,
            finished: false,
        };
        let obs = sim.restart(seed);
        (sim, obs)
    }

    /// Starts a new episode on the same scene.
    pub fn restart(&mut self, seed: u64) -> BTreeMap<AgentId, Observation> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.step = 0;
        self.agents.clear();
        self.dead.clear();
        self.next_id = 0;
        self.finished = false;
        self.fill_vacancies();
        self.agents.keys().map(|&id| (id, self.observe(id))).collect()
    }

    pub fn scene(&self) -> &SceneSpec {
        &self.scene
    }

    pub fn road(&self) -> &RoadNetwork {
        &self.road
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn set_agent_count(&mut self, count: Option<usize>) {
        self.config.agent_count = count;
    }

    pub fn target_count(&self) -> usize {
        self.config.agent_count.unwrap_or(self.scene.target_agent_count)
    }

    pub fn current_step(&self) -> usize {
        self.step
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn active_ids(&self) -> Vec<AgentId> {
        self.agents.keys().copied().collect()
    }

    pub fn vehicle(&self, id: AgentId) -> Option<&VehicleState> {
        self.agents.get(&id).map(|a| &a.state)
    }

    pub fn vehicles(&self) -> impl Iterator<Item = &VehicleState> {
        self.agents.values().map(|a| &a.state)
    }

    pub fn dead_vehicles(&self) -> &[VehicleState] {
        &self.dead
    }

    pub fn route(&self, id: AgentId) -> Option<&Route> {
        self.agents.get(&id).map(|a| a.route.as_ref())
    }

    /// Arc length reached along the agent's route.
    pub fn progress(&self, id: AgentId) -> Option<f64> {
        self.agents.get(&id).map(|a| a.progress)
    }

    pub fn destination_of(&self, id: AgentId) -> Option<usize> {
        self.agents.get(&id).map(|a| a.destination)
    }

    fn spawn_body(&self, idx: usize) -> OrientedRect {
        let sp = &self.scene.spawn_points[idx];
        OrientedRect::new(sp.position, sp.heading, VEHICLE_LENGTH + 2.0, VEHICLE_WIDTH + 0.6)
    }

    fn spawn_is_free(&self, idx: usize) -> bool {
        let zone = self.spawn_body(idx);
        self.agents.values().all(|a| !zone.overlaps(&a.state.body()))
            && self.dead.iter().all(|d| !zone.overlaps(&d.body()))
            && self.obstacles.iter().all(|o| !zone.overlaps(o))
    }

    /// Spawns agents at uniformly chosen free spawn points until the target count is met
    /// or no spawn point is free.
    fn fill_vacancies(&mut self) -> Vec<AgentId> {
        let target = self.target_count();
        let mut spawned = Vec::new();
        if self.agents.len() >= target {
            return spawned;
        }
        let mut free: Vec<usize> = (0..self.scene.spawn_points.len())
            .filter(|&i| self.routes[i].iter().any(Option::is_some) && self.spawn_is_free(i))
            .collect();
        while self.agents.len() < target && !free.is_empty() {
            let pick = free.remove(self.rng.random_range(0..free.len()));
            let reachable: Vec<usize> =
                (0..self.scene.destinations.len()).filter(|&d| self.routes[pick][d].is_some()).collect();
            let destination = reachable[self.rng.random_range(0..reachable.len())];
            let route = self.routes[pick][destination].clone().expect("reachable");
            let sp = &self.scene.spawn_points[pick];
            let id = AgentId(self.next_id);
            self.next_id += 1;
            let proj = route.path.project(sp.position);
            let state = VehicleState {
                agent_id: id,
                position: sp.position,
                heading: sp.heading,
                speed: self.config.spawn_speed,
                steering: 0.0,
                length: VEHICLE_LENGTH,
                width: VEHICLE_WIDTH,
                spawn_step: self.step,
                end_step: None,
                dead_timer: 0,
                spawn_index: pick,
            };
            self.agents.insert(id, Agent { state, route, destination, progress: proj.s, segment_hint: proj.segment });
            spawned.push(id);
            free.retain(|&i| self.spawn_is_free(i));
        }
        spawned
    }

    fn integrate(cfg: &SimConfig, s: &mut VehicleState, action: KinematicAction) {
        let a = action.clamped();
        let steer = a.steer * cfg.max_steer;
        let accel = if a.accel >= 0.0 { a.accel * cfg.max_accel } else { a.accel * cfg.max_brake };
        let dt = cfg.dt;
        s.position.x += s.speed * s.heading.cos() * dt;
        s.position.y += s.speed * s.heading.sin() * dt;
        s.heading = wrap_angle(s.heading + s.speed / WHEELBASE * steer.tan() * dt);
        s.speed = (s.speed + accel * dt).clamp(0.0, cfg.max_speed);
        s.steering = steer;
    }

    /// Advances every active vehicle by one tick.
    pub fn step(&mut self, actions: &BTreeMap<AgentId, KinematicAction>) -> Result<StepOutcome, StepError> {
        if self.finished {
            return Err(StepError::EpisodeFinished);
        }
        for (&id, a) in actions {
            if !self.agents.contains_key(&id) {
                return Err(StepError::UnknownAgent(id));
            }
            if !a.is_finite() {
                return Err(StepError::NonFiniteAction(id));
            }
        }
        for &id in self.agents.keys() {
            if !actions.contains_key(&id) {
                return Err(StepError::MissingAction(id));
            }
        }
        self.step += 1;
        let t = self.step;
        for (id, agent) in self.agents.iter_mut() {
            Self::integrate(&self.config, &mut agent.state, actions[id]);
        }

        let ids: Vec<AgentId> = self.agents.keys().copied().collect();
        let bodies: Vec<OrientedRect> = self.agents.values().map(|a| a.state.body()).collect();
        let dead_bodies: Vec<OrientedRect> = self.dead.iter().map(|d| d.body()).collect();
        let grid = SpatialHash::from_points(
            DEFAULT_CELL,
            bodies.iter().chain(dead_bodies.iter()).map(|b| b.center),
        );
        let reach = 2.0 * VEHICLE_LENGTH.hypot(VEHICLE_WIDTH) * 0.5;
        let mut crashed = vec![false; ids.len()];
        for i in 0..ids.len() {
            let mut hit = crashed[i];
            grid.candidates(bodies[i].center, reach, |j| {
                if j < ids.len() {
                    if j > i && bodies[i].overlaps(&bodies[j]) {
                        hit = true;
                        crashed[j] = true;
                    }
                } else if bodies[i].overlaps(&dead_bodies[j - ids.len()]) {
                    hit = true;
                }
            });
            if !hit {
                hit = self.obstacles.iter().any(|o| bodies[i].overlaps(o));
            }
            crashed[i] = hit;
        }

        let truncate = t >= self.config.horizon;
        let mut results = BTreeMap::new();
        for (k, id) in ids.iter().enumerate() {
            let agent = self.agents.get_mut(id).unwrap();
            let pos = agent.state.position;
            let lo = agent.segment_hint.saturating_sub(2);
            let proj = agent.route.path.project_range(pos, lo, agent.segment_hint + 12);
            let progress = proj.s - agent.progress;
            agent.progress = proj.s;
            agent.segment_hint = proj.segment;
            let dest = &self.scene.destinations[agent.destination];
            let reason = if crashed[k] {
                Some(TerminationReason::Crash)
            } else if !self.road.is_on_road(pos) {
                Some(TerminationReason::OutOfRoad)
            } else if pos.distance(dest.center) <= dest.radius {
                Some(TerminationReason::Success)
            } else if truncate {
                Some(TerminationReason::Truncated)
            } else {
                None
            };
            let reward = self.config.reward.compute(progress, reason);
            results.insert(
                *id,
                AgentStepResult {
                    reward,
                    done: reason.is_some(),
                    reason,
                    position: pos,
                    heading: agent.state.heading,
                    speed: agent.state.speed,
                    progress,
                },
            );
        }

        // dead vehicles from earlier steps age first, then this step's terminations join them
        for d in &mut self.dead {
            d.dead_timer -= 1;
        }
        self.dead.retain(|d| d.dead_timer > 0);
        let mut finals = BTreeMap::new();
        for (id, r) in &results {
            if r.done {
                let agent = self.agents.remove(id).unwrap();
                let mut state = agent.state.clone();
                state.end_step = Some(t);
                state.dead_timer = DEAD_STEPS;
                finals.insert(*id, agent);
                self.dead.push(state);
            }
        }
        if truncate {
            self.finished = true;
        }
        let spawned = if self.finished { Vec::new() } else { self.fill_vacancies() };

        let mut observations = BTreeMap::new();
        for id in results.keys() {
            let obs = match finals.get(id) {
                Some(agent) => self.observe_agent(agent),
                None => self.observe(*id),
            };
            observations.insert(*id, obs);
        }
        for id in &spawned {
            observations.insert(*id, self.observe(*id));
        }
        Ok(StepOutcome { step: t, results, spawned, observations })
    }

    /// Other active agents within `radius` of the agent's center.
    pub fn neighborhood_query(&self, id: AgentId, radius: f64) -> BTreeSet<AgentId> {
        let ids: Vec<AgentId> = self.agents.keys().copied().collect();
        let Some(me) = ids.iter().position(|&x| x == id) else {
            return BTreeSet::new();
        };
        let pts: Vec<Vec2> = self.agents.values().map(|a| a.state.position).collect();
        neighbors_within(&pts, radius)[me].iter().map(|&j| ids[j]).collect()
    }

    /// Normalized lidar distances for an active agent.
    pub fn lidar_scan(&self, id: AgentId) -> Option<[f64; LIDAR_RAYS]> {
        self.agents.get(&id).map(|a| self.scan_from(&a.state))
    }

    fn scan_from(&self, ego: &VehicleState) -> [f64; LIDAR_RAYS] {
        let range = self.config.lidar_range;
        let reach = range + VEHICLE_LENGTH;
        let mut bodies: Vec<OrientedRect> = self
            .agents
            .values()
            .map(|a| &a.state)
            .chain(self.dead.iter())
            .filter(|v| !(v.agent_id == ego.agent_id) && v.position.distance(ego.position) <= reach)
            .map(VehicleState::body)
            .collect();
        bodies.extend(self.obstacles.iter().filter(|o| o.center.distance(ego.position) <= range + o.bounding_radius()));
        lidar::scan(ego.position, ego.heading, &bodies, Some(&self.road), range)
    }

    /// Current observation of an active agent.
    ///
    /// # Panics
    /// If `id` is not active.
    pub fn observe(&self, id: AgentId) -> Observation {
        self.observe_agent(&self.agents[&id])
    }

    fn observe_agent(&self, agent: &Agent) -> Observation {
        let cfg = &self.config;
        let s = &agent.state;
        let route = &agent.route;
        let lo = agent.segment_hint.saturating_sub(2);
        let proj = route.path.project_range(s.position, lo, agent.segment_hint + 12);
        let w = route.width_at(&proj);
        let mut v = Vec::with_capacity(OBS_DIM);
        v.push((s.speed / cfg.max_speed).clamp(0.0, 1.0));
        v.push((s.steering / cfg.max_steer).clamp(-1.0, 1.0));
        v.push(wrap_angle(s.heading - proj.heading) / PI);
        v.push(((0.5 * w - proj.lateral) / w).clamp(-1.0, 1.0));
        v.push(((0.5 * w + proj.lateral) / w).clamp(-1.0, 1.0));
        let (cp, _) = route.path.point_at(proj.s + cfg.checkpoint_lookahead);
        let to_cp = cp - s.position;
        v.push((to_cp.norm() / (2.0 * cfg.checkpoint_lookahead)).clamp(0.0, 1.0));
        v.push(wrap_angle(to_cp.angle() - s.heading) / PI);
        let to_dest = self.scene.destinations[agent.destination].center - s.position;
        v.push((to_dest.norm() / 100.0).clamp(0.0, 1.0));
        v.push(wrap_angle(to_dest.angle() - s.heading) / PI);
        v.extend_from_slice(&self.scan_from(s));
        debug_assert_eq!(v.len(), OBS_DIM);
        Observation(v)
    }
}
