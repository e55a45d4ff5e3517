//! Occupancy histograms of exported trajectories.

use std::collections::BTreeMap;

use image::{GrayImage, Luma, Rgb, RgbImage};

use crate::env::trajectory::TrajectoryRecord;
use crate::env::{TerminationReason, Vec2};

pub const DENSITY_CELL: f64 = 0.5;

/// Per-spawn-group counts over a regular grid. Row 0 is the lowest `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub origin: Vec2,
    pub cell: f64,
    pub width: usize,
    pub height: usize,
    /// Spawn index (or `None` when unknown) to row-major counts.
    pub groups: BTreeMap<Option<usize>, Vec<u64>>,
    pub crashes: Vec<Vec2>,
}

impl DensityGrid {
    pub fn new(min: Vec2, max: Vec2, cell: f64) -> Self {
        let width = (((max.x - min.x) / cell).floor() as usize + 1).max(1);
        let height = (((max.y - min.y) / cell).floor() as usize + 1).max(1);
        Self { origin: min, cell, width, height, groups: BTreeMap::new(), crashes: Vec::new() }
    }

    /// Cell of `p`; points outside the grid go to the nearest border cell.
    pub fn cell_of(&self, p: Vec2) -> (usize, usize) {
        let ix = ((p.x - self.origin.x) / self.cell).floor().clamp(0.0, (self.width - 1) as f64) as usize;
        let iy = ((p.y - self.origin.y) / self.cell).floor().clamp(0.0, (self.height - 1) as f64) as usize;
        (ix, iy)
    }

    pub fn add(&mut self, rec: &TrajectoryRecord) {
        let p = Vec2::new(rec.x, rec.y);
        let (ix, iy) = self.cell_of(p);
        let n = self.width * self.height;
        self.groups.entry(rec.spawn).or_insert_with(|| vec![0; n])[iy * self.width + ix] += 1;
        if rec.done_reason == Some(TerminationReason::Crash) {
            self.crashes.push(p);
        }
    }

    pub fn total(&self) -> Vec<u64> {
        let mut t = vec![0; self.width * self.height];
        for g in self.groups.values() {
            t.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
        t
    }

    pub fn mass(&self) -> u64 {
        self.groups.values().flatten().sum()
    }

    /// Log-scaled occupancy, dark where visited.
    pub fn to_gray_image(&self) -> GrayImage {
        let total = self.total();
        let max = total.iter().copied().max().unwrap_or(0).max(1) as f64;
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let c = total[(self.height - 1 - y as usize) * self.width + x as usize] as f64;
            Luma([255 - ((c + 1.0).ln() / (max + 1.0).ln() * 255.0).round() as u8])
        })
    }

    /// One hue per spawn group on white, crash locations drawn as black 3×3 marks.
    pub fn to_color_image(&self) -> RgbImage {
        let mut img = RgbImage::from_pixel(self.width as u32, self.height as u32, Rgb([255, 255, 255]));
        let max = self.groups.values().flatten().copied().max().unwrap_or(0).max(1) as f64;
        for (k, (_, counts)) in self.groups.iter().enumerate() {
            let hue = group_color(k);
            for (i, &c) in counts.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                let w = 0.25 + 0.75 * (c as f64 + 1.0).ln() / (max + 1.0).ln();
                let (x, y) = ((i % self.width) as u32, (self.height - 1 - i / self.width) as u32);
                let px = img.get_pixel_mut(x, y);
                for ch in 0..3 {
                    px.0[ch] = (255.0 * (1.0 - w) + hue[ch] as f64 * w).round() as u8;
                }
            }
        }
        for &p in &self.crashes {
            let (ix, iy) = self.cell_of(p);
            let (cx, cy) = (ix as i64, (self.height - 1 - iy) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (x, y) = (cx + dx, cy + dy);
                    if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
                        img.put_pixel(x as u32, y as u32, Rgb([0, 0, 0]));
                    }
                }
            }
        }
        img
    }

    /// `x,y,count` rows of nonzero cells, coordinates at cell centers.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,count\n");
        for (i, c) in self.total().into_iter().enumerate() {
            if c > 0 {
                let x = self.origin.x + ((i % self.width) as f64 + 0.5) * self.cell;
                let y = self.origin.y + ((i / self.width) as f64 + 0.5) * self.cell;
                s.push_str(&format!("{x},{y},{c}\n"));
            }
        }
        s
    }
}

fn group_color(k: usize) -> [u8; 3] {
    const PALETTE: [[u8; 3]; 8] = [
        [31, 119, 180],
        [255, 127, 14],
        [44, 160, 44],
        [214, 39, 40],
        [148, 103, 189],
        [140, 86, 75],
        [227, 119, 194],
        [23, 190, 207],
    ];
    PALETTE[k % PALETTE.len()]
}

/// Histogram over `bounds`, or over the bounding box of the records with a one-cell margin.
pub fn trajectory_density(episodes: &[Vec<TrajectoryRecord>], bounds: Option<(Vec2, Vec2)>) -> DensityGrid {
    let (min, max) = bounds.unwrap_or_else(|| {
        let mut it = episodes.iter().flatten().map(|r| Vec2::new(r.x, r.y));
        match it.next() {
            None => (Vec2::new(0.0, 0.0), Vec2::new(0.0, 0.0)),
            Some(first) => {
                let (lo, hi) = it.fold((first, first), |(lo, hi), p| {
                    (Vec2::new(lo.x.min(p.x), lo.y.min(p.y)), Vec2::new(hi.x.max(p.x), hi.y.max(p.y)))
                });
                let m = Vec2::new(DENSITY_CELL, DENSITY_CELL);
                (lo - m, hi + m)
            }
        }
    });
    let mut grid = DensityGrid::new(min, max, DENSITY_CELL);
    episodes.iter().flatten().for_each(|r| grid.add(r));
    grid
}
