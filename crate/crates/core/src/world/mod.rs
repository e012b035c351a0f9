//! Occupancy grids, raycasting and simulated range sensing.

mod generate;
mod io;
mod scan;

pub use generate::{default_goal, default_start, generate_world, generate_world_with, WorldGenConfig};
pub use io::{load_world, parse_world, save_world, write_world};
pub use scan::{simulate_scan, RangeScan};

use crate::geometry::Vec2;

/// Cell value at or above which a cell counts as occupied.
pub const OCCUPIED_THRESHOLD: f64 = 0.5;

/// Planar pose `(x, y, θ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// Result of a single ray query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    /// Distance to the first occupied cell boundary, or the query limit.
    pub distance: f64,
    /// The ray started inside (or on the boundary of) an occupied cell; the
    /// distance is then zero.
    pub blocked: bool,
}

/// 2D occupancy grid. Cell `(i, j)` covers
/// `[ox + i·r, ox + (i+1)·r) × [oy + j·r, oy + (j+1)·r)`.
///
/// Cells outside the grid read as free. `observed` tracks which cells have
/// been seen by a sensor; ground-truth maps are fully observed.
#[derive(Debug, Clone, PartialEq)]
pub struct Costmap {
    resolution: f64,
    origin: Vec2,
    width: usize,
    height: usize,
    cells: Vec<f64>,
    observed: Vec<bool>,
    occupied_threshold: f64,
    seed: u64,
}

impl Costmap {
    /// Fully observed, empty map.
    pub fn new_free(resolution: f64, origin: Vec2, width: usize, height: usize) -> Self {
        assert!(resolution > 0.0, "resolution must be positive");
        Self {
            resolution,
            origin,
            width,
            height,
            cells: vec![0.0; width * height],
            observed: vec![true; width * height],
            occupied_threshold: OCCUPIED_THRESHOLD,
            seed: 0,
        }
    }

    /// Map with the same geometry as `other` and nothing observed yet.
    /// Unobserved cells read as free.
    pub fn unknown_like(other: &Costmap) -> Self {
        Self {
            cells: vec![0.0; other.cells.len()],
            observed: vec![false; other.cells.len()],
            ..other.clone()
        }
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    pub fn occupied_threshold(&self) -> f64 {
        self.occupied_threshold
    }

    /// World extent `(width, height)` in metres.
    pub fn extent(&self) -> (f64, f64) {
        (
            self.width as f64 * self.resolution,
            self.height as f64 * self.resolution,
        )
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    #[inline]
    pub fn in_bounds(&self, i: i64, j: i64) -> bool {
        i >= 0 && j >= 0 && (i as usize) < self.width && (j as usize) < self.height
    }

    /// Integer cell coordinates of a world point (possibly out of bounds).
    #[inline]
    pub fn cell_coords(&self, p: Vec2) -> (i64, i64) {
        (
            ((p.x - self.origin.x) / self.resolution).floor() as i64,
            ((p.y - self.origin.y) / self.resolution).floor() as i64,
        )
    }

    /// In-bounds cell containing `p`.
    pub fn world_to_cell(&self, p: Vec2) -> Option<(usize, usize)> {
        let (i, j) = self.cell_coords(p);
        self.in_bounds(i, j).then_some((i as usize, j as usize))
    }

    #[inline]
    pub fn cell_center(&self, i: i64, j: i64) -> Vec2 {
        Vec2::new(
            self.origin.x + (i as f64 + 0.5) * self.resolution,
            self.origin.y + (j as f64 + 0.5) * self.resolution,
        )
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.cells[self.index(i, j)]
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.observed[self.index(i, j)]
    }

    /// Set a cell value (clamped into `[0, 1]`) and mark it observed.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let k = self.index(i, j);
        self.cells[k] = value.clamp(0.0, 1.0);
        self.observed[k] = true;
    }

    #[inline]
    pub fn is_occupied(&self, i: i64, j: i64) -> bool {
        self.in_bounds(i, j) && self.cells[self.index(i as usize, j as usize)] >= self.occupied_threshold
    }

    pub fn occupied_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.height).flat_map(move |j| {
            (0..self.width).filter_map(move |i| self.is_occupied(i as i64, j as i64).then_some((i, j)))
        })
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&v| v >= self.occupied_threshold).count()
    }

    /// Mark every cell whose centre lies in the axis-aligned box as occupied.
    pub fn fill_rect(&mut self, min: Vec2, max: Vec2) {
        self.fill_where(min, max, |_| true);
    }

    /// Mark every cell whose centre lies in the disc as occupied.
    pub fn fill_disc(&mut self, center: Vec2, radius: f64) {
        let r = Vec2::new(radius, radius);
        self.fill_where(center - r, center + r, |c| (c - center).norm() <= radius);
    }

    fn fill_where(&mut self, min: Vec2, max: Vec2, inside: impl Fn(Vec2) -> bool) {
        let (i0, j0) = self.cell_coords(min);
        let (i1, j1) = self.cell_coords(max);
        for j in j0.max(0)..=j1.min(self.height as i64 - 1) {
            for i in i0.max(0)..=i1.min(self.width as i64 - 1) {
                let c = self.cell_center(i, j);
                if c.x >= min.x && c.x <= max.x && c.y >= min.y && c.y <= max.y && inside(c) {
                    self.set(i as usize, j as usize, 1.0);
                }
            }
        }
    }

    /// Walk the cells pierced by the ray `origin + t·dir`, `t ∈ [0, max_dist]`,
    /// in order (Amanatides-Woo DDA). `visit(i, j, t_entry)` returns `true` to
    /// stop. The origin cell is visited first with `t_entry = 0`.
    pub fn traverse(&self, origin: Vec2, dir: Vec2, max_dist: f64, mut visit: impl FnMut(i64, i64, f64) -> bool) {
        let (mut i, mut j) = self.cell_coords(origin);
        if visit(i, j, 0.0) {
            return;
        }
        let r = self.resolution;
        let axis = |o: f64, d: f64, cell: i64, base: f64| -> (i64, f64, f64) {
            if d > 0.0 {
                (1, (base + (cell + 1) as f64 * r - o) / d, r / d)
            } else if d < 0.0 {
                (-1, (base + cell as f64 * r - o) / d, -r / d)
            } else {
                (0, f64::INFINITY, f64::INFINITY)
            }
        };
        let (step_x, mut t_max_x, t_delta_x) = axis(origin.x, dir.x, i, self.origin.x);
        let (step_y, mut t_max_y, t_delta_y) = axis(origin.y, dir.y, j, self.origin.y);
        loop {
            let t = if t_max_x < t_max_y {
                i += step_x;
                let t = t_max_x;
                t_max_x += t_delta_x;
                t
            } else if t_max_x == t_max_y {
                // Exact corner crossing: the side cells are touched at a single point.
                i += step_x;
                j += step_y;
                let t = t_max_x;
                t_max_x += t_delta_x;
                t_max_y += t_delta_y;
                t
            } else {
                j += step_y;
                let t = t_max_y;
                t_max_y += t_delta_y;
                t
            };
            if !(t <= max_dist) || visit(i, j, t) {
                return;
            }
        }
    }

    /// Distance along `dir` (unit) to the first occupied cell, capped at `d_max`.
    pub fn raycast(&self, origin: Vec2, dir: Vec2, d_max: f64) -> RayHit {
        let mut hit = RayHit {
            distance: d_max,
            blocked: false,
        };
        self.traverse(origin, dir, d_max, |i, j, t| {
            if self.is_occupied(i, j) {
                hit = RayHit {
                    distance: t,
                    blocked: t <= 0.0,
                };
                true
            } else {
                false
            }
        });
        hit
    }

    /// True iff an occupied cell centre lies within `radius` of `p`.
    pub fn is_collision(&self, p: Vec2, radius: f64) -> bool {
        let (i0, j0) = self.cell_coords(p - Vec2::new(radius, radius));
        let (i1, j1) = self.cell_coords(p + Vec2::new(radius, radius));
        for j in j0.max(0)..=j1.min(self.height as i64 - 1) {
            for i in i0.max(0)..=i1.min(self.width as i64 - 1) {
                if self.is_occupied(i, j) && (self.cell_center(i, j) - p).norm() <= radius {
                    return true;
                }
            }
        }
        false
    }

    /// Euclidean distance from `p` to the nearest occupied cell square,
    /// searching up to `search` metres away (returns `search` if none).
    pub fn clearance(&self, p: Vec2, search: f64) -> f64 {
        let r = self.resolution;
        let (i0, j0) = self.cell_coords(p - Vec2::new(search, search));
        let (i1, j1) = self.cell_coords(p + Vec2::new(search, search));
        let mut best = search;
        for j in j0.max(0)..=j1.min(self.height as i64 - 1) {
            for i in i0.max(0)..=i1.min(self.width as i64 - 1) {
                if !self.is_occupied(i, j) {
                    continue;
                }
                let lo = Vec2::new(self.origin.x + i as f64 * r, self.origin.y + j as f64 * r);
                let dx = (lo.x - p.x).max(0.0).max(p.x - (lo.x + r));
                let dy = (lo.y - p.y).max(0.0).max(p.y - (lo.y + r));
                best = best.min((dx * dx + dy * dy).sqrt());
            }
        }
        best
    }

    /// Row-major mask of cells whose centre lies within `radius` of an
    /// occupied cell square (occupied cells included).
    pub fn inflated(&self, radius: f64) -> Vec<bool> {
        let r = self.resolution;
        let k = (radius / r).ceil() as i64 + 1;
        let mut mask = vec![false; self.cells.len()];
        for (i, j) in self.occupied_cells() {
            let (i, j) = (i as i64, j as i64);
            for b in (j - k).max(0)..=(j + k).min(self.height as i64 - 1) {
                for a in (i - k).max(0)..=(i + k).min(self.width as i64 - 1) {
                    let dx = ((a - i).abs() as f64 * r - 0.5 * r).max(0.0);
                    let dy = ((b - j).abs() as f64 * r - 0.5 * r).max(0.0);
                    if dx * dx + dy * dy <= radius * radius {
                        mask[b as usize * self.width + a as usize] = true;
                    }
                }
            }
        }
        mask
    }

    /// Fold a range scan into the map: cells the beam crosses before its hit
    /// become free, the hit cell becomes occupied, cells beyond are untouched.
    pub fn integrate_scan(&mut self, scan: &RangeScan) {
        let origin = scan.pose.position();
        let mut updates: Vec<(i64, i64, f64)> = Vec::new();
        for (k, &range) in scan.ranges.iter().enumerate() {
            let dir = scan.beam_direction(k);
            let hit = range < scan.max_range;
            // Scans report a grazing zero-distance hit as the smallest positive range.
            let grazing = range <= f64::MIN_POSITIVE;
            let mut first = true;
            self.traverse(origin, dir, scan.max_range, |i, j, t| {
                let at_hit = t >= range || (grazing && !first);
                first = false;
                if hit && at_hit {
                    updates.push((i, j, 1.0));
                    true
                } else {
                    updates.push((i, j, 0.0));
                    false
                }
            });
            for &(i, j, v) in &updates {
                if self.in_bounds(i, j) {
                    self.set(i as usize, j as usize, v);
                }
            }
            updates.clear();
        }
    }
}
