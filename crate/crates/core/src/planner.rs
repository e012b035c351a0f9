//! Reference path generation: 8-connected A* on the inflated costmap,
//! line-of-sight pruning, then an arc-length spline truncated to `s_max`.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use crate::error::{Error, Result};
use crate::geometry::{fit_spline, reparameterize_arclength, PlanarCurve, Vec2};
use crate::world::Costmap;

const SQRT2: f64 = std::f64::consts::SQRT_2;
/// Arc-length tolerance handed to the reparameterization.
const REPARAM_TOL: f64 = 1e-4;
/// Step of the post-fit clearance check.
const CHECK_STEP: f64 = 0.01;
const MAX_REFITS: usize = 24;

/// Plan a reference curve from `start` to `goal` on `map`.
///
/// The grid is inflated by `r_o + r_c`. If `start` itself lies inside the
/// inflation, the inflated cells connected to it whose clearance is no worse
/// than the start's are traversable, so the robot can back out of tight spots.
/// Every point of the returned curve is at least `min(r_o, clearance(start))`
/// from any occupied cell square.
pub fn plan(map: &Costmap, start: Vec2, goal: Vec2, s_max: f64, r_o: f64) -> Result<PlanarCurve> {
    if !(s_max > 0.0) || !(r_o > 0.0) {
        return Err(Error::InvalidInput(format!("s_max {s_max} and r_o {r_o} must be positive")));
    }
    if (goal - start).norm() < 1e-6 {
        return Err(Error::InvalidInput("start and goal coincide".into()));
    }
    let grid = Grid::new(map, start, r_o)?;
    let gcell = map
        .world_to_cell(goal)
        .ok_or_else(|| Error::PlanningFailed("goal outside the map".into()))?;
    let goal_idx = grid.idx(gcell.0 as i64, gcell.1 as i64);
    if grid.blocked[goal_idx] {
        return Err(Error::PlanningFailed("goal lies inside the inflated obstacles".into()));
    }
    let cells = grid.astar(grid.start, goal_idx)?;

    // Vertex list: exact start, interior cell centres, exact goal.
    let mut verts: Vec<Vec2> = cells.iter().map(|&k| grid.center(k)).collect();
    verts[0] = start;
    if verts.len() == 1 {
        verts.push(goal);
    } else {
        *verts.last_mut().unwrap() = goal;
    }

    let mut keep = grid.prune(&verts);
    let required = r_o.min(map.clearance(start, r_o + map.resolution()));
    for _ in 0..MAX_REFITS {
        let curve = fit_kept(&verts, &keep, s_max)?;
        let bad = violating_spans(map, &curve, &verts, &keep, required);
        if bad.is_empty() {
            return Ok(curve);
        }
        let mut inserted = false;
        for span in bad.into_iter().rev() {
            let (a, b) = (keep[span], keep[span + 1]);
            if b - a > 1 {
                keep.insert(span + 1, (a + b) / 2);
                inserted = true;
            }
        }
        if !inserted {
            break;
        }
    }
    Err(Error::PlanningFailed(format!(
        "fitted curve keeps violating the {required:.3} m clearance after refits"
    )))
}

/// Fit a spline through the kept vertices, cutting the vertex list a little
/// past `s_max` before fitting.
fn fit_kept(verts: &[Vec2], keep: &[usize], s_max: f64) -> Result<PlanarCurve> {
    let mut pts = vec![verts[keep[0]]];
    let mut len = 0.0;
    for &k in &keep[1..] {
        len += (verts[k] - *pts.last().unwrap()).norm();
        pts.push(verts[k]);
        if len > s_max + 1.0 {
            break;
        }
    }
    let curve = reparameterize_arclength(&fit_spline(&pts)?, REPARAM_TOL)?;
    Ok(curve.truncated(s_max))
}

/// Indices of kept spans (segments between consecutive kept vertices) that
/// lie nearest to points of the curve violating the clearance.
fn violating_spans(map: &Costmap, curve: &PlanarCurve, verts: &[Vec2], keep: &[usize], required: f64) -> Vec<usize> {
    let search = required + map.resolution();
    let mut spans = Vec::new();
    for p in curve.polyline(CHECK_STEP) {
        if map.clearance(p, search) >= required - 1e-9 {
            continue;
        }
        let mut best = (0, f64::INFINITY);
        for s in 0..keep.len() - 1 {
            let d = point_segment_distance(p, verts[keep[s]], verts[keep[s + 1]]);
            if d < best.1 {
                best = (s, d);
            }
        }
        if !spans.contains(&best.0) {
            spans.push(best.0);
        }
    }
    spans.sort_unstable();
    spans
}

fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared().max(1e-300)).clamp(0.0, 1.0);
    (a + ab * t - p).norm()
}

struct Grid<'a> {
    map: &'a Costmap,
    blocked: Vec<bool>,
    start: usize,
}

#[derive(PartialEq)]
struct Node {
    f: f64,
    h: f64,
    idx: usize,
}

impl Eq for Node {}

impl Ord for Node {
    // Reversed so BinaryHeap pops the smallest (f, h, idx).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then(other.h.total_cmp(&self.h))
            .then(other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<'a> Grid<'a> {
    fn new(map: &'a Costmap, start: Vec2, r_o: f64) -> Result<Self> {
        let (si, sj) = map
            .world_to_cell(start)
            .ok_or_else(|| Error::PlanningFailed("start outside the map".into()))?;
        let inflation = r_o + map.resolution();
        let mut blocked = map.inflated(inflation);
        let mut grid = Grid {
            map,
            blocked: Vec::new(),
            start: sj * map.width() + si,
        };
        if map.is_occupied(si as i64, sj as i64) {
            return Err(Error::PlanningFailed("start lies in an occupied cell".into()));
        }
        if blocked[grid.start] {
            // Escape region: inflated cells connected to the start that are at
            // least as clear as the start cell.
            let floor = map.clearance(map.cell_center(si as i64, sj as i64), inflation) - 1e-9;
            let mut queue = VecDeque::from([grid.start]);
            blocked[grid.start] = false;
            let mut seen = vec![false; blocked.len()];
            seen[grid.start] = true;
            while let Some(k) = queue.pop_front() {
                let (i, j) = grid.coords(k);
                for (di, dj) in NEIGHBOURS {
                    let (a, b) = (i + di, j + dj);
                    if !map.in_bounds(a, b) {
                        continue;
                    }
                    let n = grid.idx(a, b);
                    if seen[n] || !blocked[n] || map.is_occupied(a, b) {
                        continue;
                    }
                    seen[n] = true;
                    if map.clearance(map.cell_center(a, b), inflation) >= floor {
                        blocked[n] = false;
                        queue.push_back(n);
                    }
                }
            }
        }
        grid.blocked = blocked;
        Ok(grid)
    }

    fn idx(&self, i: i64, j: i64) -> usize {
        j as usize * self.map.width() + i as usize
    }

    fn coords(&self, k: usize) -> (i64, i64) {
        ((k % self.map.width()) as i64, (k / self.map.width()) as i64)
    }

    fn center(&self, k: usize) -> Vec2 {
        let (i, j) = self.coords(k);
        self.map.cell_center(i, j)
    }

    fn free(&self, i: i64, j: i64) -> bool {
        self.map.in_bounds(i, j) && !self.blocked[self.idx(i, j)]
    }

    fn octile(&self, a: usize, b: usize) -> f64 {
        let (ai, aj) = self.coords(a);
        let (bi, bj) = self.coords(b);
        let (dx, dy) = ((ai - bi).abs() as f64, (aj - bj).abs() as f64);
        dx.max(dy) + (SQRT2 - 1.0) * dx.min(dy)
    }

    fn astar(&self, start: usize, goal: usize) -> Result<Vec<usize>> {
        let n = self.blocked.len();
        let mut g = vec![f64::INFINITY; n];
        let mut parent = vec![usize::MAX; n];
        let mut closed = vec![false; n];
        let mut open = BinaryHeap::new();
        g[start] = 0.0;
        let h0 = self.octile(start, goal);
        open.push(Node { f: h0, h: h0, idx: start });
        while let Some(Node { idx, .. }) = open.pop() {
            if closed[idx] {
                continue;
            }
            if idx == goal {
                let mut path = vec![goal];
                let mut k = goal;
                while k != start {
                    k = parent[k];
                    path.push(k);
                }
                path.reverse();
                return Ok(path);
            }
            closed[idx] = true;
            let (i, j) = self.coords(idx);
            for (di, dj) in NEIGHBOURS {
                let (a, b) = (i + di, j + dj);
                if !self.free(a, b) {
                    continue;
                }
                let diagonal = di != 0 && dj != 0;
                if diagonal && !(self.free(i + di, j) && self.free(i, j + dj)) {
                    continue;
                }
                let nb = self.idx(a, b);
                let cand = g[idx] + if diagonal { SQRT2 } else { 1.0 };
                if cand < g[nb] {
                    g[nb] = cand;
                    parent[nb] = idx;
                    let h = self.octile(nb, goal);
                    open.push(Node { f: cand + h, h, idx: nb });
                }
            }
        }
        Err(Error::PlanningFailed("no grid path between start and goal".into()))
    }

    /// Straight segment stays in traversable cells (dense sampling at r_c/8).
    fn visible(&self, a: Vec2, b: Vec2) -> bool {
        let step = self.map.resolution() / 8.0;
        let n = ((b - a).norm() / step).ceil() as usize;
        (0..=n).all(|k| {
            let p = a + (b - a) * (k as f64 / n.max(1) as f64);
            let (i, j) = self.map.cell_coords(p);
            self.free(i, j)
        })
    }

    /// Greedy line-of-sight shortcut; returns indices into `verts`.
    fn prune(&self, verts: &[Vec2]) -> Vec<usize> {
        let mut keep = vec![0];
        let mut anchor = 0;
        while anchor < verts.len() - 1 {
            let mut next = anchor + 1;
            for k in (anchor + 2..verts.len()).rev() {
                if self.visible(verts[anchor], verts[k]) {
                    next = k;
                    break;
                }
            }
            keep.push(next);
            anchor = next;
        }
        keep
    }
}

const NEIGHBOURS: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
