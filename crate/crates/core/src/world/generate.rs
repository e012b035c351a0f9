use std::collections::VecDeque;

use rand::Rng;

use super::Costmap;
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::rng::{derive_seed, seeded};

/// Parameters of the procedural world generator.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldGenConfig {
    pub resolution: f64,
    pub robot_radius: f64,
    /// Smallest and largest obstacle half-size (disc radius or box half-side).
    pub size_range: (f64, f64),
    /// Minimum gap between obstacle bounding circles.
    pub gap: f64,
    pub max_regenerations: u64,
}

impl Default for WorldGenConfig {
    fn default() -> Self {
        Self {
            resolution: 0.05,
            robot_radius: 0.15,
            size_range: (0.1, 0.3),
            gap: 0.1,
            max_regenerations: 64,
        }
    }
}

impl WorldGenConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.size_range;
        let ok = self.resolution > 0.0
            && self.resolution.is_finite()
            && self.robot_radius >= 0.0
            && self.robot_radius.is_finite()
            && lo > 0.0
            && lo <= hi
            && hi.is_finite()
            && self.gap >= 0.0
            && self.gap.is_finite()
            && self.max_regenerations > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid world generator settings: {self:?}")))
        }
    }
}

/// Start position used for generated worlds: 1 m in from the left edge, centred.
pub fn default_start(map: &Costmap) -> Vec2 {
    let (_, h) = map.extent();
    map.origin() + Vec2::new(1.0, 0.5 * h)
}

/// Goal position used for generated worlds: 1 m in from the right edge, centred.
pub fn default_goal(map: &Costmap) -> Vec2 {
    let (w, h) = map.extent();
    map.origin() + Vec2::new(w - 1.0, 0.5 * h)
}

/// Generate a world with default generator settings.
pub fn generate_world(seed: u64, density: f64, extent: (f64, f64)) -> Result<Costmap> {
    generate_world_with(&WorldGenConfig::default(), seed, density, extent)
}

/// Place `round(density · area)` discs and boxes uniformly at random, keeping
/// the start and goal discs (radius 3·r_o) clear, then verify that the start
/// and goal are connected on the grid inflated by `r_o + r_c`. Disconnected
/// draws are regenerated from a derived seed.
pub fn generate_world_with(cfg: &WorldGenConfig, seed: u64, density: f64, extent: (f64, f64)) -> Result<Costmap> {
    cfg.validate()?;
    if !(density >= 0.0) || !(extent.0 > 2.5) || !(extent.1 > 0.0) {
        return Err(Error::InvalidInput(format!(
            "bad world request: density {density}, extent {extent:?}"
        )));
    }
    let r = cfg.resolution;
    let w = (extent.0 / r).round() as usize;
    let h = (extent.1 / r).round() as usize;
    let count = (density * extent.0 * extent.1).round() as usize;
    for attempt in 0..cfg.max_regenerations {
        let mut map = Costmap::new_free(r, Vec2::zeros(), w, h);
        map.set_seed(seed);
        place_obstacles(cfg, &mut map, derive_seed(seed, &[attempt]), count);
        let inflation = cfg.robot_radius + cfg.resolution;
        if connected(&map, default_start(&map), default_goal(&map), inflation) {
            return Ok(map);
        }
    }
    Err(Error::InvalidInput(format!(
        "no connected world after {} draws (seed {seed}, density {density})",
        cfg.max_regenerations
    )))
}

enum Shape {
    Disc(f64),
    Rect(f64, f64),
}

fn place_obstacles(cfg: &WorldGenConfig, map: &mut Costmap, seed: u64, count: usize) {
    let mut rng = seeded(seed);
    let (wx, wy) = map.extent();
    let keep_out = [default_start(map), default_goal(map)];
    let clear = 3.0 * cfg.robot_radius;
    let (lo, hi) = cfg.size_range;
    let mut placed: Vec<(Vec2, f64)> = Vec::new();
    for _ in 0..count {
        for _try in 0..200 {
            let shape = if rng.random_bool(0.5) {
                Shape::Disc(rng.random_range(lo..=hi))
            } else {
                Shape::Rect(rng.random_range(lo..=hi), rng.random_range(lo..=hi))
            };
            let bound = match shape {
                Shape::Disc(rad) => rad,
                Shape::Rect(a, b) => a.hypot(b),
            };
            let c = Vec2::new(rng.random_range(0.0..wx), rng.random_range(0.0..wy)) + map.origin();
            if keep_out.iter().any(|k| (c - k).norm() < bound + clear) {
                continue;
            }
            if placed.iter().any(|(q, rq)| (c - q).norm() < bound + rq + cfg.gap) {
                continue;
            }
            match shape {
                Shape::Disc(rad) => map.fill_disc(c, rad),
                Shape::Rect(a, b) => map.fill_rect(c - Vec2::new(a, b), c + Vec2::new(a, b)),
            }
            placed.push((c, bound));
            break;
        }
    }
}

fn connected(map: &Costmap, start: Vec2, goal: Vec2, inflation: f64) -> bool {
    let blocked = map.inflated(inflation);
    let (Some(s), Some(g)) = (map.world_to_cell(start), map.world_to_cell(goal)) else {
        return false;
    };
    let w = map.width();
    let idx = |(i, j): (usize, usize)| j * w + i;
    if blocked[idx(s)] || blocked[idx(g)] {
        return false;
    }
    let mut seen = vec![false; blocked.len()];
    let mut queue = VecDeque::from([s]);
    seen[idx(s)] = true;
    while let Some((i, j)) = queue.pop_front() {
        if (i, j) == g {
            return true;
        }
        for (di, dj) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            let (ni, nj) = (i as i64 + di, j as i64 + dj);
            if !map.in_bounds(ni, nj) {
                continue;
            }
            let n = (ni as usize, nj as usize);
            if !seen[idx(n)] && !blocked[idx(n)] {
                seen[idx(n)] = true;
                queue.push_back(n);
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 8-connected flood-fill count of occupied components.
    fn components(m: &Costmap) -> usize {
        let (w, h) = (m.width(), m.height());
        let mut seen = vec![false; w * h];
        let mut n = 0;
        for (i, j) in m.occupied_cells() {
            if seen[j * w + i] {
                continue;
            }
            n += 1;
            let mut stack = vec![(i as i64, j as i64)];
            seen[j * w + i] = true;
            while let Some((a, b)) = stack.pop() {
                for da in -1..=1 {
                    for db in -1..=1 {
                        let (x, y) = (a + da, b + db);
                        if m.is_occupied(x, y) && !seen[y as usize * w + x as usize] {
                            seen[y as usize * w + x as usize] = true;
                            stack.push((x, y));
                        }
                    }
                }
            }
        }
        n
    }

    #[test]
    fn zero_density_is_empty() {
        let m = generate_world(3, 0.0, (10.0, 10.0)).unwrap();
        assert_eq!(m.occupied_count(), 0);
        assert_eq!((m.width(), m.height()), (200, 200));
    }

    #[test]
    fn deterministic() {
        let a = generate_world(11, 0.3, (10.0, 10.0)).unwrap();
        let b = generate_world(11, 0.3, (10.0, 10.0)).unwrap();
        assert_eq!(a, b);
        let c = generate_world(12, 0.3, (10.0, 10.0)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn blob_count_and_clear_endpoints() {
        for seed in 0..5 {
            let m = generate_world(seed, 0.3, (10.0, 10.0)).unwrap();
            let n = components(&m);
            assert!((25..=35).contains(&n), "seed {seed}: {n} blobs");
            for p in [default_start(&m), default_goal(&m)] {
                assert!(!m.is_collision(p, 3.0 * 0.15));
            }
            assert!(connected(&m, default_start(&m), default_goal(&m), 0.2));
        }
    }
}
