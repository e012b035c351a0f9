use std::f64::consts::TAU;

use super::{Costmap, Pose};
use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// A 360° range scan. Beam `i` points at `θ + 2πi/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeScan {
    pub pose: Pose,
    pub max_range: f64,
    pub ranges: Vec<f64>,
}

impl RangeScan {
    pub fn n_beams(&self) -> usize {
        self.ranges.len()
    }

    pub fn beam_angle(&self, i: usize) -> f64 {
        self.pose.theta + TAU * i as f64 / self.ranges.len() as f64
    }

    pub fn beam_direction(&self, i: usize) -> Vec2 {
        let a = self.beam_angle(i);
        Vec2::new(a.cos(), a.sin())
    }

    /// World coordinates of each beam endpoint.
    pub fn endpoints(&self) -> Vec<Vec2> {
        let o = self.pose.position();
        (0..self.n_beams())
            .map(|i| o + self.beam_direction(i) * self.ranges[i])
            .collect()
    }
}

/// Noise-free scan against a ground-truth map.
pub fn simulate_scan(truth: &Costmap, pose: Pose, n_beams: usize, max_range: f64) -> Result<RangeScan> {
    if n_beams == 0 || !(max_range > 0.0) {
        return Err(Error::InvalidInput(format!(
            "scan needs n_beams > 0 and max_range > 0 (got {n_beams}, {max_range})"
        )));
    }
    let (i, j) = truth.cell_coords(pose.position());
    if truth.is_occupied(i, j) {
        return Err(Error::InvalidInput(format!(
            "scan origin ({:.3}, {:.3}) lies in an occupied cell",
            pose.x, pose.y
        )));
    }
    let mut scan = RangeScan {
        pose,
        max_range,
        ranges: vec![max_range; n_beams],
    };
    let o = pose.position();
    for k in 0..n_beams {
        let hit = truth.raycast(o, scan.beam_direction(k), max_range);
        // Grazing a corner from a cell boundary can report zero; keep ranges positive.
        scan.ranges[k] = hit.distance.max(f64::MIN_POSITIVE);
    }
    Ok(scan)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_world_hits_nothing() {
        let m = Costmap::new_free(0.05, Vec2::zeros(), 100, 100);
        let s = simulate_scan(&m, Pose::new(2.5, 2.5, 0.3), 360, 5.0).unwrap();
        assert_eq!(s.n_beams(), 360);
        assert!(s.ranges.iter().all(|&r| r == 5.0));
    }

    #[test]
    fn ring_of_obstacles() {
        let mut m = Costmap::new_free(0.05, Vec2::zeros(), 100, 100);
        let c = Vec2::new(2.5, 2.5);
        for k in 0..2000 {
            let a = TAU * k as f64 / 2000.0;
            if let Some((i, j)) = m.world_to_cell(c + Vec2::new(a.cos(), a.sin())) {
                m.set(i, j, 1.0);
            }
        }
        let s = simulate_scan(&m, Pose::new(c.x, c.y, 0.0), 360, 5.0).unwrap();
        for &r in &s.ranges {
            assert!((r - 1.0).abs() <= 0.1, "{r}");
        }
    }

    #[test]
    fn single_beam_equals_raycast() {
        let mut m = Costmap::new_free(0.05, Vec2::zeros(), 60, 60);
        m.fill_rect(Vec2::new(2.0, 0.0), Vec2::new(2.2, 3.0));
        let p = Pose::new(0.73, 1.11, 0.2);
        let s = simulate_scan(&m, p, 1, 4.0).unwrap();
        let h = m.raycast(p.position(), Vec2::new(0.2f64.cos(), 0.2f64.sin()), 4.0);
        assert_eq!(s.ranges[0], h.distance);
    }

    #[test]
    fn occupied_origin_is_an_error() {
        let mut m = Costmap::new_free(0.05, Vec2::zeros(), 20, 20);
        m.set(4, 4, 1.0);
        let c = m.cell_center(4, 4);
        assert!(simulate_scan(&m, Pose::new(c.x, c.y, 0.0), 8, 1.0).is_err());
    }

    #[test]
    fn integrate_unknown_map_clears_disc() {
        let truth = Costmap::new_free(0.05, Vec2::zeros(), 80, 80);
        let mut known = Costmap::unknown_like(&truth);
        let s = simulate_scan(&truth, Pose::new(2.0, 2.0, 0.0), 360, 1.0).unwrap();
        known.integrate_scan(&s);
        assert_eq!(known.occupied_count(), 0);
        // Cells well inside the range are observed, cells well outside are not.
        let (i, j) = known.world_to_cell(Vec2::new(2.5, 2.1)).unwrap();
        assert!(known.is_observed(i, j));
        let (i, j) = known.world_to_cell(Vec2::new(3.5, 3.5)).unwrap();
        assert!(!known.is_observed(i, j));
    }

    #[test]
    fn integrate_marks_wall_and_is_idempotent() {
        let mut truth = Costmap::new_free(0.05, Vec2::zeros(), 80, 80);
        truth.fill_rect(Vec2::new(3.0, 0.0), Vec2::new(3.1, 4.0));
        let mut known = Costmap::unknown_like(&truth);
        let s = simulate_scan(&truth, Pose::new(2.0, 2.0, 0.0), 360, 2.0).unwrap();
        known.integrate_scan(&s);
        // Straight-ahead beam hits the first wall column.
        let (i, j) = known.world_to_cell(Vec2::new(3.01, 2.01)).unwrap();
        assert_eq!(known.value(i, j), 1.0);
        // Second wall column is occluded.
        let (i, j) = known.world_to_cell(Vec2::new(3.07, 2.01)).unwrap();
        assert!(!known.is_observed(i, j));
        let once = known.clone();
        known.integrate_scan(&s);
        assert_eq!(once, known);
        // Every observed-occupied cell is occupied in the truth.
        for (i, j) in known.occupied_cells() {
            assert!(truth.is_occupied(i as i64, j as i64));
        }
    }
}
