//! Planar geometry primitives: vectors, oriented rectangles, polylines.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector pointing along `angle` (radians, counter-clockwise from +x).
    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self { x: c, y: s }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn rotate(self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self { x: c * self.x - s * self.y, y: s * self.x + c * self.y }
    }

    /// Left-hand perpendicular.
    pub fn perp(self) -> Self {
        Self { x: -self.y, y: self.x }
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            self * (1.0 / n)
        } else {
            self
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// Rectangle with arbitrary orientation, given by its center, heading and half extents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedRect {
    pub center: Vec2,
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl OrientedRect {
    pub fn new(center: Vec2, heading: f64, length: f64, width: f64) -> Self {
        Self { center, heading, half_length: 0.5 * length, half_width: 0.5 * width }
    }

    fn axes(&self) -> (Vec2, Vec2) {
        let fwd = Vec2::from_angle(self.heading);
        (fwd, fwd.perp())
    }

    pub fn corners(&self) -> [Vec2; 4] {
        let (f, l) = self.axes();
        let a = f * self.half_length;
        let b = l * self.half_width;
        [
            self.center + a + b,
            self.center + a - b,
            self.center - a - b,
            self.center - a + b,
        ]
    }

    /// Radius of the circumscribed circle.
    pub fn bounding_radius(&self) -> f64 {
        self.half_length.hypot(self.half_width)
    }

    fn project_extent(&self, axis: Vec2) -> f64 {
        let (f, l) = self.axes();
        self.half_length * f.dot(axis).abs() + self.half_width * l.dot(axis).abs()
    }

    /// Separating-axis overlap test. Touching edges count as overlapping.
    pub fn overlaps(&self, other: &OrientedRect) -> bool {
        let d = other.center - self.center;
        if d.norm() > self.bounding_radius() + other.bounding_radius() {
            return false;
        }
        let (f1, l1) = self.axes();
        let (f2, l2) = other.axes();
        for axis in [f1, l1, f2, l2] {
            let dist = d.dot(axis).abs();
            if dist > self.project_extent(axis) + other.project_extent(axis) {
                return false;
            }
        }
        true
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let (f, l) = self.axes();
        let d = p - self.center;
        d.dot(f).abs() <= self.half_length && d.dot(l).abs() <= self.half_width
    }

    /// Distance along a unit-direction ray to the first boundary crossing, if within `max_dist`.
    /// A ray starting inside the rectangle reports 0.
    pub fn ray_hit(&self, origin: Vec2, dir: Vec2, max_dist: f64) -> Option<f64> {
        let (f, l) = self.axes();
        let rel = origin - self.center;
        let o = [rel.dot(f), rel.dot(l)];
        let d = [dir.dot(f), dir.dot(l)];
        let half = [self.half_length, self.half_width];
        let mut t_min = 0.0_f64;
        let mut t_max = max_dist;
        for k in 0..2 {
            if d[k].abs() < 1e-15 {
                if o[k].abs() > half[k] {
                    return None;
                }
            } else {
                let inv = 1.0 / d[k];
                let mut t0 = (-half[k] - o[k]) * inv;
                let mut t1 = (half[k] - o[k]) * inv;
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                t_min = t_min.max(t0);
                t_max = t_max.min(t1);
                if t_min > t_max {
                    return None;
                }
            }
        }
        Some(t_min)
    }
}

/// Result of projecting a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the foot point.
    pub s: f64,
    /// Signed lateral offset, positive to the left of the direction of travel.
    pub lateral: f64,
    /// Tangent heading at the foot point.
    pub heading: f64,
    pub segment: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Vec2>,
    cumulative: Vec<f64>,
}

impl Polyline {
    /// Builds a polyline, dropping consecutive duplicate points. Needs at least two distinct points.
    pub fn new(points: Vec<Vec2>) -> Option<Self> {
        let mut pts: Vec<Vec2> = Vec::with_capacity(points.len());
        for p in points {
            if pts.last().is_none_or(|q: &Vec2| q.distance(p) > 1e-9) {
                pts.push(p);
            }
        }
        if pts.len() < 2 {
            return None;
        }
        let mut cumulative = Vec::with_capacity(pts.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in pts.windows(2) {
            acc += w[0].distance(w[1]);
            cumulative.push(acc);
        }
        Some(Self { points: pts, cumulative })
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }

    pub fn start(&self) -> Vec2 {
        self.points[0]
    }

    pub fn end(&self) -> Vec2 {
        *self.points.last().expect("polyline has points")
    }

    pub fn segment_count(&self) -> usize {
        self.points.len() - 1
    }

    pub fn segment(&self, i: usize) -> (Vec2, Vec2) {
        (self.points[i], self.points[i + 1])
    }

    pub fn segment_start_s(&self, i: usize) -> f64 {
        self.cumulative[i]
    }

    fn project_on_segment(&self, i: usize, p: Vec2) -> (f64, f64, f64) {
        let (a, b) = self.segment(i);
        let ab = b - a;
        let len_sq = ab.norm_sq();
        let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
        let foot = a + ab * t;
        let dist_sq = (p - foot).norm_sq();
        (t, dist_sq, ab.cross(p - a).signum())
    }

    /// Projection restricted to segments `[lo, hi)`.
    pub fn project_range(&self, p: Vec2, lo: usize, hi: usize) -> Projection {
        let hi = hi.min(self.segment_count()).max(lo + 1);
        let mut best = (f64::INFINITY, 0usize, 0.0, 0.0);
        for i in lo..hi {
            let (t, d2, side) = self.project_on_segment(i, p);
            if d2 < best.0 {
                best = (d2, i, t, side);
            }
        }
        let (d2, i, t, side) = best;
        let (a, b) = self.segment(i);
        let seg_len = a.distance(b);
        Projection {
            s: self.cumulative[i] + t * seg_len,
            lateral: side * d2.sqrt(),
            heading: (b - a).angle(),
            segment: i,
        }
    }

    pub fn project(&self, p: Vec2) -> Projection {
        self.project_range(p, 0, self.segment_count())
    }

    pub fn distance_to(&self, p: Vec2) -> f64 {
        self.project(p).lateral.abs()
    }

    /// Point and tangent heading at arc length `s`, clamped to the polyline.
    pub fn point_at(&self, s: f64) -> (Vec2, f64) {
        let s = s.clamp(0.0, self.length());
        let i = match self.cumulative.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(self.segment_count() - 1),
            Err(i) => (i.max(1) - 1).min(self.segment_count() - 1),
        };
        let (a, b) = self.segment(i);
        let seg_len = a.distance(b);
        let t = if seg_len > 0.0 { (s - self.cumulative[i]) / seg_len } else { 0.0 };
        (a + (b - a) * t, (b - a).angle())
    }

    /// Sub-polyline covering arc lengths `[s0, s1]`.
    pub fn slice(&self, s0: f64, s1: f64) -> Option<Polyline> {
        let (s0, s1) = (s0.max(0.0), s1.min(self.length()));
        if s1 - s0 <= 1e-9 {
            return None;
        }
        let mut pts = vec![self.point_at(s0).0];
        for (p, &c) in self.points.iter().zip(&self.cumulative) {
            if c > s0 && c < s1 {
                pts.push(*p);
            }
        }
        pts.push(self.point_at(s1).0);
        Polyline::new(pts)
    }

    pub fn concat(parts: &[&Polyline]) -> Option<Polyline> {
        let mut pts = Vec::new();
        for p in parts {
            pts.extend_from_slice(&p.points);
        }
        Polyline::new(pts)
    }
}

/// Squared distance from `p` to segment `ab`.
pub fn segment_distance_sq(a: Vec2, b: Vec2, p: Vec2) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == 0.0 {
        return (p - a).norm_sq();
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm_sq()
}
