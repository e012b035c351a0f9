use proptest::prelude::*;
use safenav::world::{
    default_goal, default_start, generate_world, parse_world, simulate_scan, write_world, Costmap, Pose,
};
use safenav::Vec2;

/// A 3×2 m map at 5 cm with random rectangles.
fn random_map() -> impl Strategy<Value = Costmap> {
    prop::collection::vec((0.0f64..3.0, 0.0f64..2.0, 0.05f64..0.6, 0.05f64..0.6), 0..6).prop_map(|rects| {
        let mut m = Costmap::new_free(0.05, Vec2::new(-0.5, 0.25), 60, 40);
        for (x, y, w, h) in rects {
            let lo = Vec2::new(x - 0.5, y + 0.25);
            m.fill_rect(lo, lo + Vec2::new(w, h));
        }
        m
    })
}

/// First occupied point along the ray, by fine marching.
fn marched_hit(m: &Costmap, o: Vec2, dir: Vec2, d_max: f64, step: f64) -> f64 {
    let n = (d_max / step).ceil() as usize;
    for k in 0..=n {
        let d = (k as f64 * step).min(d_max);
        let (i, j) = m.cell_coords(o + dir * d);
        if m.is_occupied(i, j) {
            return d;
        }
    }
    d_max
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn raycast_matches_marching(m in random_map(), ox in 0.0f64..3.0, oy in 0.0f64..2.0, phi in 0.0f64..std::f64::consts::TAU) {
        let o = Vec2::new(ox - 0.5, oy + 0.25);
        let (i, j) = m.cell_coords(o);
        prop_assume!(!m.is_occupied(i, j));
        let dir = Vec2::new(phi.cos(), phi.sin());
        let step = 1e-4;
        let hit = m.raycast(o, dir, 2.0);
        let oracle = marched_hit(&m, o, dir, 2.0, step);
        prop_assert!(!hit.blocked);
        prop_assert!((hit.distance - oracle).abs() <= 2.0 * step, "dda {} marched {}", hit.distance, oracle);
    }

    #[test]
    fn world_files_round_trip(m in random_map(), seed in any::<u64>()) {
        let mut m = m;
        m.set_seed(seed);
        let text = write_world(&m);
        let back = parse_world(&text).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(write_world(&back), text);
    }

    #[test]
    fn collision_agrees_with_clearance(m in random_map(), px in 0.0f64..3.0, py in 0.0f64..2.0, r in 0.05f64..0.4) {
        let p = Vec2::new(px - 0.5, py + 0.25);
        // Clearance is to cell squares, collision to cell centres.
        let c = m.clearance(p, 1.0);
        if m.is_collision(p, r) {
            prop_assert!(c <= r);
        }
        if c > r + 0.0 && !m.is_collision(p, r) {
            prop_assert!(m.clearance(p, r) >= r - 1e-12);
        }
    }

    #[test]
    fn scan_endpoints_lie_on_obstacles_or_range(m in random_map(), ox in 0.0f64..3.0, oy in 0.0f64..2.0) {
        let pose = Pose::new(ox - 0.5, oy + 0.25, 0.3);
        let (i, j) = m.cell_coords(pose.position());
        prop_assume!(!m.is_occupied(i, j));
        let scan = simulate_scan(&m, pose, 90, 1.5).unwrap();
        for k in 0..scan.n_beams() {
            let r = scan.ranges[k];
            prop_assert!(r > 0.0 && r <= 1.5);
            if r < 1.5 {
                let e = pose.position() + scan.beam_direction(k) * (r + 1e-6);
                prop_assert!(m.clearance(e, 0.1) < 1e-5);
            }
        }
    }
}

#[test]
fn generated_worlds_keep_start_and_goal_clear() {
    for seed in 0..20 {
        let m = generate_world(seed, 0.8, (8.0, 4.0)).unwrap();
        assert!(m.clearance(default_start(&m), 1.0) > 0.15);
        assert!(m.clearance(default_goal(&m), 1.0) > 0.15);
        assert_eq!(m, generate_world(seed, 0.8, (8.0, 4.0)).unwrap());
        assert_eq!(m.seed(), seed);
    }
}
