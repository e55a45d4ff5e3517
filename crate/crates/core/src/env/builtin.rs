//! Parameterized scenes shipped with the simulator.

use std::f64::consts::{FRAC_PI_2, TAU};

use super::geometry::Vec2;
use super::scene::{Destination, LaneSpec, SceneSpec, SpawnPoint};

const LANE_WIDTH: f64 = 4.0;

/// Names accepted by [`by_name`].
pub const NAMES: &[&str] = &[
    "corridor",
    "mini_intersection",
    "intersection4",
    "bottleneck",
    "roundabout",
    "merge",
];

pub fn by_name(name: &str) -> Option<SceneSpec> {
    Some(match name {
        "corridor" => corridor(),
        "mini_intersection" => mini_intersection(),
        "intersection4" => intersection4(),
        "bottleneck" => bottleneck(),
        "roundabout" => roundabout(),
        "merge" => merge(),
        _ => return None,
    })
}

fn lane(id: u32, pts: Vec<Vec2>) -> LaneSpec {
    LaneSpec { id, centerline: pts, width: LANE_WIDTH }
}

fn right_of(dir: Vec2) -> Vec2 {
    Vec2::new(dir.y, -dir.x)
}

fn quad_bezier(p0: Vec2, c: Vec2, p1: Vec2, n: usize) -> Vec<Vec2> {
    (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            let u = 1.0 - t;
            p0 * (u * u) + c * (2.0 * u * t) + p1 * (t * t)
        })
        .collect()
}

/// Control point where the ray `a + s*da` meets the ray `b - t*db`; midpoint when parallel.
fn tangent_corner(a: Vec2, da: Vec2, b: Vec2, db: Vec2) -> Vec2 {
    let denom = da.cross(-db);
    if denom.abs() < 1e-9 {
        return (a + b) * 0.5;
    }
    let s = (b - a).cross(-db) / denom;
    a + da * s
}

/// Single straight lane with two spawn points.
pub fn corridor() -> SceneSpec {
    SceneSpec {
        name: "corridor".into(),
        target_agent_count: 2,
        lanes: vec![lane(0, vec![Vec2::new(0.0, 0.0), Vec2::new(120.0, 0.0)])],
        spawn_points: vec![
            SpawnPoint { position: Vec2::new(5.0, 0.0), heading: 0.0, lane: 0 },
            SpawnPoint { position: Vec2::new(20.0, 0.0), heading: 0.0, lane: 0 },
        ],
        destinations: vec![Destination { center: Vec2::new(112.0, 0.0), radius: 5.0 }],
        static_obstacles: vec![],
    }
}

/// Unprotected four-way intersection with one lane per direction and no U-turns.
///
/// Lane ids: incoming `10+k`, outgoing `20+k`, connector from arm `k` to arm `m` is `100+10k+m`.
pub fn intersection(name: &str, approach: f64, spawns_per_lane: usize, target: usize) -> SceneSpec {
    let box_half = 12.0;
    let hw = 0.5 * LANE_WIDTH;
    let mut lanes = Vec::new();
    let mut spawn_points = Vec::new();
    let mut destinations = Vec::new();
    let arms: Vec<Vec2> = (0..4).map(|k| Vec2::from_angle(k as f64 * FRAC_PI_2)).collect();
    let incoming_end = |k: usize| {
        let u = arms[k];
        u * box_half + right_of(-u) * hw
    };
    let outgoing_start = |k: usize| {
        let u = arms[k];
        u * box_half + right_of(u) * hw
    };
    for (k, &u) in arms.iter().enumerate() {
        let v = -u;
        let in_start = u * (box_half + approach) + right_of(v) * hw;
        lanes.push(lane(10 + k as u32, vec![in_start, incoming_end(k)]));
        let out_end = u * (box_half + approach) + right_of(u) * hw;
        lanes.push(lane(20 + k as u32, vec![outgoing_start(k), out_end]));
        for j in 0..spawns_per_lane {
            let d = 5.0 + 10.0 * j as f64;
            spawn_points.push(SpawnPoint { position: in_start + v * d, heading: v.angle(), lane: 10 + k as u32 });
        }
        destinations.push(Destination {
            center: u * (box_half + approach - 6.0) + right_of(u) * hw,
            radius: 5.0,
        });
    }
    for k in 0..4 {
        for m in 0..4 {
            if m == k {
                continue;
            }
            let a = incoming_end(k);
            let b = outgoing_start(m);
            let c = tangent_corner(a, -arms[k], b, arms[m]);
            lanes.push(lane(100 + 10 * k as u32 + m as u32, quad_bezier(a, c, b, 10)));
        }
    }
    SceneSpec {
        name: name.into(),
        target_agent_count: target,
        lanes,
        spawn_points,
        destinations,
        static_obstacles: vec![],
    }
}

/// Four 80 m approaches, 32 spawn points, 30 agents.
pub fn intersection4() -> SceneSpec {
    intersection("intersection4", 80.0, 8, 30)
}

/// Four 30 m approaches and four agents; the desk-scale training scene.
pub fn mini_intersection() -> SceneSpec {
    intersection("mini_intersection", 30.0, 2, 4)
}

/// Two lanes squeezing into one and splitting again.
pub fn bottleneck() -> SceneSpec {
    let mut lanes = Vec::new();
    let mut spawn_points = Vec::new();
    let mut destinations = Vec::new();
    for (i, y) in [2.0, -2.0].into_iter().enumerate() {
        let i = i as u32;
        lanes.push(lane(i, vec![Vec2::new(0.0, y), Vec2::new(60.0, y)]));
        lanes.push(lane(2 + i, vec![Vec2::new(60.0, y), Vec2::new(75.0, 0.0)]));
        lanes.push(lane(5 + i, vec![Vec2::new(115.0, 0.0), Vec2::new(130.0, y)]));
        lanes.push(lane(7 + i, vec![Vec2::new(130.0, y), Vec2::new(180.0, y)]));
        for j in 0..6 {
            spawn_points.push(SpawnPoint { position: Vec2::new(5.0 + 10.0 * j as f64, y), heading: 0.0, lane: i });
        }
        destinations.push(Destination { center: Vec2::new(172.0, y), radius: 3.0 });
    }
    lanes.push(lane(4, vec![Vec2::new(75.0, 0.0), Vec2::new(115.0, 0.0)]));
    SceneSpec {
        name: "bottleneck".into(),
        target_agent_count: 10,
        lanes,
        spawn_points,
        destinations,
        static_obstacles: vec![],
    }
}

fn arc(radius: f64, from: f64, to: f64) -> Vec<Vec2> {
    let sweep = (to - from).rem_euclid(TAU);
    let n = ((sweep / (5.0_f64).to_radians()).ceil() as usize).max(2);
    (0..=n).map(|i| Vec2::from_angle(from + sweep * i as f64 / n as f64) * radius).collect()
}

/// Single-lane counter-clockwise roundabout with four arms.
///
/// Lane ids: entry `k`, exit `10+k`, ring piece into arm `k`'s merge point `20+k`,
/// ring piece leaving it `30+k`.
pub fn roundabout() -> SceneSpec {
    let ring = 18.0;
    let gap = 0.35;
    let hw = 0.5 * LANE_WIDTH;
    let mut lanes = Vec::new();
    let mut spawn_points = Vec::new();
    let mut destinations = Vec::new();
    for k in 0..4u32 {
        let theta = k as f64 * FRAC_PI_2;
        let next = theta + FRAC_PI_2;
        let u = Vec2::from_angle(theta);
        let v = -u;
        let entry_pt = Vec2::from_angle(theta + gap) * ring;
        let exit_pt = Vec2::from_angle(theta - gap) * ring;
        let in_far = u * (ring + 40.0) + right_of(v) * hw;
        let in_near = u * (ring + 8.0) + right_of(v) * hw;
        lanes.push(lane(k, vec![in_far, in_near, entry_pt]));
        let out_near = u * (ring + 8.0) + right_of(u) * hw;
        let out_far = u * (ring + 40.0) + right_of(u) * hw;
        lanes.push(lane(10 + k, vec![exit_pt, out_near, out_far]));
        lanes.push(lane(20 + k, arc(ring, theta - gap, theta + gap)));
        lanes.push(lane(30 + k, arc(ring, theta + gap, next - gap)));
        for j in 0..3 {
            spawn_points.push(SpawnPoint {
                position: in_far + v * (5.0 + 10.0 * j as f64),
                heading: v.angle(),
                lane: k,
            });
        }
        destinations.push(Destination { center: u * (ring + 34.0) + right_of(u) * hw, radius: 5.0 });
    }
    SceneSpec {
        name: "roundabout".into(),
        target_agent_count: 10,
        lanes,
        spawn_points,
        destinations,
        static_obstacles: vec![],
    }
}

/// An on-ramp joining a main lane; agents from both branches share one exit lane.
pub fn merge() -> SceneSpec {
    let ramp_start = Vec2::new(5.0, -14.0);
    let join = Vec2::new(50.0, 0.0);
    let ramp_dir = (join - ramp_start).normalized();
    let lanes = vec![
        lane(0, vec![Vec2::new(0.0, 0.0), join]),
        lane(1, vec![ramp_start, join]),
        lane(2, vec![join, Vec2::new(110.0, 0.0)]),
    ];
    let mut spawn_points = Vec::new();
    for d in [5.0, 17.0] {
        spawn_points.push(SpawnPoint { position: Vec2::new(d, 0.0), heading: 0.0, lane: 0 });
        spawn_points.push(SpawnPoint { position: ramp_start + ramp_dir * (d - 3.0), heading: ramp_dir.angle(), lane: 1 });
    }
    SceneSpec {
        name: "merge".into(),
        target_agent_count: 4,
        lanes,
        spawn_points,
        destinations: vec![Destination { center: Vec2::new(102.0, 0.0), radius: 5.0 }],
        static_obstacles: vec![],
    }
}
