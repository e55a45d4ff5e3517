//! Uniform hash grid used for broad-phase collision checks and radius queries.

use std::collections::HashMap;

use super::geometry::Vec2;

/// Default broad-phase cell size in meters.
pub const DEFAULT_CELL: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct SpatialHash {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl SpatialHash {
    pub fn new(cell: f64) -> Self {
        assert!(cell > 0.0, "cell size must be positive");
        Self { cell, cells: HashMap::new() }
    }

    /// Builds a grid over `points`, keyed by their index.
    pub fn from_points(cell: f64, points: impl IntoIterator<Item = Vec2>) -> Self {
        let mut grid = Self::new(cell);
        for (i, p) in points.into_iter().enumerate() {
            grid.insert(i, p);
        }
        grid
    }

    fn key(&self, p: Vec2) -> (i64, i64) {
        ((p.x / self.cell).floor() as i64, (p.y / self.cell).floor() as i64)
    }

    pub fn insert(&mut self, id: usize, p: Vec2) {
        let k = self.key(p);
        self.cells.entry(k).or_default().push(id);
    }

    /// Ids whose cell intersects the axis-aligned box around the disc `(p, r)`.
    /// Candidates are visited in a deterministic order (cell row-major, insertion order).
    pub fn candidates(&self, p: Vec2, r: f64, mut f: impl FnMut(usize)) {
        let lo = self.key(p - Vec2::new(r, r));
        let hi = self.key(p + Vec2::new(r, r));
        for ix in lo.0..=hi.0 {
            for iy in lo.1..=hi.1 {
                if let Some(ids) = self.cells.get(&(ix, iy)) {
                    ids.iter().for_each(|&i| f(i));
                }
            }
        }
    }
}

/// For every point, the sorted indices of all *other* points within `radius` (inclusive).
///
/// Infinite or very large radii fall back to the all-pairs scan.
pub fn neighbors_within(points: &[Vec2], radius: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    if !radius.is_finite() || radius > 1e6 {
        return (0..n)
            .map(|i| (0..n).filter(|&j| j != i && points[i].distance(points[j]) <= radius).collect())
            .collect();
    }
    let cell = radius.max(1e-3);
    let grid = SpatialHash::from_points(cell, points.iter().copied());
    let r2 = radius * radius;
    points
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut out = Vec::new();
            grid.candidates(p, radius, |j| {
                if j != i && (points[j] - p).norm_sq() <= r2 {
                    out.push(j);
                }
            });
            out.sort_unstable();
            out
        })
        .collect()
}
