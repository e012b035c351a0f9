use safenav::clf_cbf::{cbf_pair, lyapunov, CbfParams, ClfParams};
use safenav::corridor::Corridor;
use safenav::geometry::{fit_spline, reparameterize_arclength};
use safenav::mpcc::{
    assemble_ocp, linearize, solve, step_plant, AugmentedState, Input, Mpcc, MpccConfig, SolveStatus,
};
use safenav::{PlanarCurve, Vec2};

fn straight(len: f64) -> PlanarCurve {
    let pts: Vec<Vec2> = (0..=8).map(|i| Vec2::new(len * i as f64 / 8.0, 0.0)).collect();
    reparameterize_arclength(&fit_spline(&pts).unwrap(), 1e-6).unwrap()
}

fn bend() -> PlanarCurve {
    let pts: Vec<Vec2> = (0..=20)
        .map(|i| {
            let a = std::f64::consts::FRAC_PI_2 * i as f64 / 20.0;
            Vec2::new(2.0 * a.sin(), 2.0 - 2.0 * a.cos())
        })
        .collect();
    reparameterize_arclength(&fit_spline(&pts).unwrap(), 1e-6).unwrap()
}

#[test]
fn closed_loop_tracks_straight_line() {
    let curve = straight(4.0);
    let corridor = Corridor::constant((0.0, 4.0), 0.6, 0.6);
    let mut ctrl = Mpcc::new(MpccConfig::default());
    let (clf, cbf) = (ClfParams::default(), CbfParams::default());
    let mut s = AugmentedState::default();
    let mut optimal = 0;
    for _ in 0..30 {
        let sol = ctrl.solve(&s, &curve, Some(&corridor), &clf, &cbf);
        if sol.status == SolveStatus::Optimal {
            optimal += 1;
        }
        assert!(sol.status != SolveStatus::Infeasible);
        s = step_plant(&s, &sol.inputs[0], &ctrl.config, 4.0).0;
        let (hu, hl) = cbf_pair(&s, &curve, &corridor, &cbf);
        assert!(hu > 0.0 && hl > 0.0);
    }
    assert!(optimal >= 25, "only {optimal} optimal solves");
    assert!(s.x > 1.0, "made little progress: {s:?}");
    assert!(s.y.abs() < 0.05);
}

#[test]
fn warm_start_with_own_solution_is_not_slower() {
    let curve = bend();
    let corridor = Corridor::constant((0.0, curve.total_length()), 0.5, 0.5);
    let cfg = MpccConfig::default();
    let (clf, cbf) = (ClfParams::default(), CbfParams::default());
    let s = AugmentedState {
        x: 0.1,
        y: 0.05,
        v: 0.4,
        nu: 0.3,
        ..Default::default()
    };
    let cold = solve(&cfg, &s, &curve, Some(&corridor), &clf, &cbf, None);
    assert_eq!(cold.status, SolveStatus::Optimal);
    let warm = solve(&cfg, &s, &curve, Some(&corridor), &clf, &cbf, Some((&cold.inputs, cold.delta)));
    assert_eq!(warm.status, SolveStatus::Optimal);
    assert!(warm.iterations <= cold.iterations, "{} > {}", warm.iterations, cold.iterations);
}

#[test]
fn solution_satisfies_stage_constraints() {
    let curve = bend();
    let corridor = Corridor::constant((0.0, curve.total_length()), 0.4, 0.4);
    let cfg = MpccConfig::default();
    let (clf, cbf) = (ClfParams::default(), CbfParams::default());
    let s = AugmentedState {
        y: 0.1,
        v: 0.5,
        ..Default::default()
    };
    let sol = solve(&cfg, &s, &curve, Some(&corridor), &clf, &cbf, None);
    assert_eq!(sol.status, SolveStatus::Optimal);
    let tol = 1e-6;
    for (k, u) in sol.inputs.iter().enumerate() {
        assert!(u.a.abs() <= cfg.a_max + tol && u.omega.abs() <= cfg.omega_max + tol);
        assert!(u.nudot.abs() <= cfg.nudot_max + tol);
        let (x0, x1) = (&sol.states[k], &sol.states[k + 1]);
        assert!(x1.v >= cfg.v_min - tol && x1.v <= cfg.v_max + tol);
        assert!(x1.nu >= -tol && x1.nu <= cfg.nu_max + tol);
        let v0 = lyapunov(x0.position(), x0.xi_hat, &curve, &clf).0;
        let v1 = lyapunov(x1.position(), x1.xi_hat, &curve, &clf).0;
        assert!(v1 <= (1.0 - clf.psi * cfg.dt) * v0 + sol.delta * cfg.dt + tol);
        let (h0u, h0l) = cbf_pair(x0, &curve, &corridor, &cbf);
        let (h1u, h1l) = cbf_pair(x1, &curve, &corridor, &cbf);
        assert!(h1u >= (1.0 - cbf.alpha_upper * cfg.dt) * h0u - tol);
        assert!(h1l >= (1.0 - cbf.alpha_lower * cfg.dt) * h0l - tol);
    }
    assert!(sol.delta >= 0.0);
}

#[test]
fn ocp_jacobian_matches_finite_differences() {
    let curve = bend();
    let corridor = Corridor::constant((0.0, curve.total_length()), 0.5, 0.4);
    let cfg = MpccConfig {
        horizon: 5,
        ..MpccConfig::default()
    };
    let (clf, cbf) = (ClfParams::default(), CbfParams::default());
    let s = AugmentedState {
        x: 0.2,
        y: 0.1,
        theta: 0.2,
        v: 0.6,
        xi_hat: 0.1,
        nu: 0.5,
    };
    let w: Vec<f64> = (0..16).map(|i| 0.1 * ((i as f64) * 0.7).sin()).collect();
    let base = assemble_ocp(&cfg, &s, &curve, Some(&corridor), &clf, &cbf, &w);
    let eps = 1e-6;
    for j in 0..w.len() {
        let mut wp = w.clone();
        let mut wm = w.clone();
        wp[j] += eps;
        wm[j] -= eps;
        let p = assemble_ocp(&cfg, &s, &curve, Some(&corridor), &clf, &cbf, &wp);
        let m = assemble_ocp(&cfg, &s, &curve, Some(&corridor), &clf, &cbf, &wm);
        for i in 0..base.values.len() {
            let fd = (p.values[i] - m.values[i]) / (2.0 * eps);
            let an = base.constraints[(i, j)];
            assert!((fd - an).abs() < 1e-5 * (1.0 + fd.abs()), "row {i} col {j}: {an} vs {fd}");
        }
        let fd = (p.cost - m.cost) / (2.0 * eps);
        assert!((fd - base.gradient[j]).abs() < 1e-4 * (1.0 + fd.abs()), "cost col {j}");
    }
}

#[test]
fn linearization_matches_finite_differences() {
    let s = AugmentedState {
        x: 0.3,
        y: -0.2,
        theta: 0.7,
        v: 0.9,
        xi_hat: 1.0,
        nu: 0.4,
    };
    let u = Input::new(0.5, -0.8, 0.3);
    let (_, a, b) = linearize(&s, &u, 0.1);
    let eps = 1e-6;
    for j in 0..6 {
        let mut p = s.as_array();
        let mut m = s.as_array();
        p[j] += eps;
        m[j] -= eps;
        let f = |v: [f64; 6]| {
            let st = AugmentedState {
                x: v[0],
                y: v[1],
                theta: v[2],
                v: v[3],
                xi_hat: v[4],
                nu: v[5],
            };
            linearize(&st, &u, 0.1).0.as_array()
        };
        let (fp, fm) = (f(p), f(m));
        for i in 0..6 {
            assert!(((fp[i] - fm[i]) / (2.0 * eps) - a[(i, j)]).abs() < 1e-7);
        }
    }
    for j in 0..3 {
        let mut p = u.as_array();
        let mut m = u.as_array();
        p[j] += eps;
        m[j] -= eps;
        let fp = linearize(&s, &Input::from_slice(&p), 0.1).0.as_array();
        let fm = linearize(&s, &Input::from_slice(&m), 0.1).0.as_array();
        for i in 0..6 {
            assert!(((fp[i] - fm[i]) / (2.0 * eps) - b[(i, j)]).abs() < 1e-7);
        }
    }
}

#[test]
fn impossible_barrier_reports_infeasible() {
    // Already outside a tiny corridor at speed: the CBF rows cannot be met.
    let curve = straight(4.0);
    let corridor = Corridor::constant((0.0, 4.0), 0.16, 0.16);
    let cfg = MpccConfig::default();
    let s = AugmentedState {
        y: 0.05,
        theta: 1.2,
        v: 2.0,
        ..Default::default()
    };
    let sol = solve(&cfg, &s, &curve, Some(&corridor), &ClfParams::default(), &CbfParams::default(), None);
    assert_ne!(sol.status, SolveStatus::Optimal);
}

