//! Lane graph, drivable-area queries and route planning.

use std::collections::HashMap;

use petgraph::algo::astar;
use petgraph::graph::{DiGraph, NodeIndex};

use super::geometry::{segment_distance_sq, Polyline, Projection, Vec2};
use super::scene::{Destination, SceneSpec};

/// Lane ends closer than this are connected in the lane graph.
const CONNECT_TOLERANCE: f64 = 0.5;
const ROAD_CELL: f64 = 5.0;

#[derive(Debug, Clone)]
pub struct Lane {
    pub id: u32,
    pub centerline: Polyline,
    pub width: f64,
}

#[derive(Debug, Clone, Copy)]
struct RoadSegment {
    a: Vec2,
    b: Vec2,
    half_width_sq: f64,
}

/// A planned path from a spawn lane to a destination.
#[derive(Debug, Clone)]
pub struct Route {
    pub path: Polyline,
    /// Lane width for each path segment.
    pub widths: Vec<f64>,
    pub lanes: Vec<usize>,
}

impl Route {
    pub fn width_at(&self, proj: &Projection) -> f64 {
        self.widths[proj.segment.min(self.widths.len() - 1)]
    }
}

#[derive(Debug, Clone)]
pub struct RoadNetwork {
    lanes: Vec<Lane>,
    graph: DiGraph<usize, f64>,
    nodes: Vec<NodeIndex>,
    segments: Vec<RoadSegment>,
    grid: HashMap<(i64, i64), Vec<u32>>,
}

fn cell_of(p: Vec2) -> (i64, i64) {
    ((p.x / ROAD_CELL).floor() as i64, (p.y / ROAD_CELL).floor() as i64)
}

impl RoadNetwork {
    pub fn build(scene: &SceneSpec) -> Result<Self, String> {
        let mut lanes = Vec::with_capacity(scene.lanes.len());
        for l in &scene.lanes {
            let centerline = Polyline::new(l.centerline.clone())
                .ok_or_else(|| format!("lane {} centerline is degenerate", l.id))?;
            lanes.push(Lane { id: l.id, centerline, width: l.width });
        }
        let mut graph = DiGraph::new();
        let nodes: Vec<NodeIndex> = (0..lanes.len()).map(|i| graph.add_node(i)).collect();
        for (i, a) in lanes.iter().enumerate() {
            for (j, b) in lanes.iter().enumerate() {
                if i != j && a.centerline.end().distance(b.centerline.start()) <= CONNECT_TOLERANCE {
                    graph.add_edge(nodes[i], nodes[j], b.centerline.length());
                }
            }
        }
        let mut segments = Vec::new();
        let mut grid: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for lane in &lanes {
            let hw = 0.5 * lane.width;
            for k in 0..lane.centerline.segment_count() {
                let (a, b) = lane.centerline.segment(k);
                let idx = segments.len() as u32;
                segments.push(RoadSegment { a, b, half_width_sq: hw * hw });
                let lo = cell_of(Vec2::new(a.x.min(b.x) - hw, a.y.min(b.y) - hw));
                let hi = cell_of(Vec2::new(a.x.max(b.x) + hw, a.y.max(b.y) + hw));
                for ix in lo.0..=hi.0 {
                    for iy in lo.1..=hi.1 {
                        grid.entry((ix, iy)).or_default().push(idx);
                    }
                }
            }
        }
        Ok(Self { lanes, graph, nodes, segments, grid })
    }

    pub fn lanes(&self) -> &[Lane] {
        &self.lanes
    }

    /// True when `p` lies inside the union of lane corridors.
    pub fn is_on_road(&self, p: Vec2) -> bool {
        self.grid.get(&cell_of(p)).is_some_and(|segs| {
            segs.iter().any(|&i| {
                let s = &self.segments[i as usize];
                segment_distance_sq(s.a, s.b, p) <= s.half_width_sq
            })
        })
    }

    /// Distance along a ray until it leaves the drivable area, capped at `max_dist`.
    pub fn boundary_distance(&self, origin: Vec2, dir: Vec2, max_dist: f64) -> f64 {
        const STEP: f64 = 0.5;
        if !self.is_on_road(origin) {
            return 0.0;
        }
        let mut inside = 0.0;
        let mut t = STEP;
        while t <= max_dist + STEP {
            let probe = t.min(max_dist);
            if !self.is_on_road(origin + dir * probe) {
                let mut outside = probe;
                for _ in 0..14 {
                    let mid = 0.5 * (inside + outside);
                    if self.is_on_road(origin + dir * mid) {
                        inside = mid;
                    } else {
                        outside = mid;
                    }
                }
                return 0.5 * (inside + outside);
            }
            inside = probe;
            if probe >= max_dist {
                break;
            }
            t += STEP;
        }
        max_dist
    }

    fn destination_on_lane(&self, lane: usize, dest: &Destination) -> Option<f64> {
        let lane = &self.lanes[lane];
        let proj = lane.centerline.project(dest.center);
        (proj.lateral.abs() <= dest.radius.min(0.5 * lane.width)).then_some(proj.s)
    }

    /// Shortest lane-graph route from `start_lane` (vehicle at `from`) to `dest`.
    pub fn plan_route(&self, start_lane: usize, from: Vec2, dest: &Destination) -> Option<Route> {
        let start_s = self.lanes[start_lane].centerline.project(from).s;
        if let Some(s) = self.destination_on_lane(start_lane, dest) {
            if s > start_s {
                return self.assemble(&[start_lane], s);
            }
        }
        let mut best: Option<(f64, Vec<usize>)> = None;
        for succ in self.graph.neighbors(self.nodes[start_lane]) {
            let found = astar(
                &self.graph,
                succ,
                |n| self.destination_on_lane(self.graph[n], dest).is_some(),
                |e| *e.weight(),
                |_| 0.0,
            );
            if let Some((cost, path)) = found {
                let lanes: Vec<usize> = path.iter().map(|n| self.graph[*n]).collect();
                let last = *lanes.last().unwrap();
                let total = self.lanes[lanes[0]].centerline.length() + cost
                    - self.lanes[last].centerline.length()
                    + self.destination_on_lane(last, dest).unwrap();
                if best.as_ref().is_none_or(|(c, _)| total < *c) {
                    let mut seq = vec![start_lane];
                    seq.extend(lanes);
                    best = Some((total, seq));
                }
            }
        }
        let (_, seq) = best?;
        let end_s = self.destination_on_lane(*seq.last().unwrap(), dest)?;
        self.assemble(&seq, end_s)
    }

    fn assemble(&self, seq: &[usize], end_s: f64) -> Option<Route> {
        let mut points: Vec<Vec2> = Vec::new();
        let mut widths = Vec::new();
        for (k, &li) in seq.iter().enumerate() {
            let lane = &self.lanes[li];
            let line = if k + 1 == seq.len() {
                lane.centerline.slice(0.0, end_s)?
            } else {
                lane.centerline.clone()
            };
            for &p in line.points() {
                if let Some(&q) = points.last() {
                    if q.distance(p) <= 1e-9 {
                        continue;
                    }
                    widths.push(lane.width);
                }
                points.push(p);
            }
        }
        let path = Polyline::new(points)?;
        debug_assert_eq!(widths.len(), path.segment_count());
        Some(Route { path, widths, lanes: seq.to_vec() })
    }
}
