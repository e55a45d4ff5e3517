use std::f64::consts::TAU;

use super::geometry::{OrientedRect, Vec2};
use super::road::RoadNetwork;
use super::LIDAR_RAYS;

/// Casts [`LIDAR_RAYS`] rays from `origin`, ray `k` at `heading + 2*pi*k/N`.
///
/// Each entry is the distance to the nearest body or road boundary divided by `range`.
pub(crate) fn scan(
    origin: Vec2,
    heading: f64,
    bodies: &[OrientedRect],
    road: Option<&RoadNetwork>,
    range: f64,
) -> [f64; LIDAR_RAYS] {
    let mut out = [1.0; LIDAR_RAYS];
    for (k, slot) in out.iter_mut().enumerate() {
        let dir = Vec2::from_angle(heading + TAU * k as f64 / LIDAR_RAYS as f64);
        let mut best = range;
        for b in bodies {
            if let Some(t) = b.ray_hit(origin, dir, best) {
                best = best.min(t);
            }
        }
        if let Some(road) = road {
            best = best.min(road.boundary_distance(origin, dir, best));
        }
        *slot = (best / range).clamp(0.0, 1.0);
    }
    out
}
