//! Condensed single-shooting OCP and its SQP solution.
//!
//! Decision vector `w = (u_0, …, u_{N−1}, δ)`. States are rolled out from
//! `x_0` with the RK4 model; stage sensitivities `S_k = ∂x_k/∂w` follow from
//! `S_{k+1} = A_k S_k + B_k E_k`.
//!
//! Constraint rows `c(w) ≥ 0`, in order:
//! 1. input boxes `u_k − u_min`, `u_max − u_k` (6 per stage);
//! 2. `δ ≥ 0`;
//! 3. for `k = 1..N`: `v_k − v_min`, `v_max − v_k`, `ν_k`, `ν⁺ − ν_k`, `s_r − ξ̂_k`;
//! 4. CLF: `(1 − ψΔt)V_k + δΔt − V_{k+1}` for `k = 0..N−1`;
//! 5. CBF: `h_{k+1} − (1 − αΔt)h_k` for the upper then the lower barrier
//!    (`h_{k+1} − h_k` for a barrier that is already negative at `x_0`).

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::qp::{solve_qp, QpOptions, QpStatus};
use super::{dynamics_discrete, linearize, wrap_angle, AugmentedState, Input, MpccConfig, MpccSolution, SolveStatus};
use crate::clf_cbf::{cbf_pair_with_gradient, lyapunov, reference_point, CbfParams, ClfParams};
use crate::corridor::Corridor;
use crate::geometry::{rot90, PlanarCurve, Vec2};

const ARMIJO: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 8;
/// Step size (∞-norm) below which an SQP iterate counts as converged.
const STEP_TOL: f64 = 1e-5;

/// Linearised QP about the current iterate: `min ½ΔwᵀHΔw + gᵀΔw  s.t.  CΔw ≥ b`.
#[derive(Debug, Clone)]
pub struct OcpData {
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
    pub constraints: DMatrix<f64>,
    pub bounds: DVector<f64>,
    /// Rolled-out states `x_0..x_N` at the iterate.
    pub states: Vec<AugmentedState>,
    pub cost: f64,
    /// Nonlinear constraint values `c(w)` (feasible when all ≥ 0).
    pub values: DVector<f64>,
    pub corridor_clamped: bool,
}

struct Problem<'a> {
    cfg: &'a MpccConfig,
    x0: AugmentedState,
    curve: &'a PlanarCurve,
    corridor: Option<&'a Corridor>,
    clf: &'a ClfParams,
    cbf: &'a CbfParams,
}

impl Problem<'_> {
    fn nw(&self) -> usize {
        3 * self.cfg.horizon + 1
    }

    fn n_cons(&self) -> usize {
        let n = self.cfg.horizon;
        let mut m = 6 * n + 1 + 5 * n;
        if self.cfg.use_clf {
            m += n;
        }
        if self.cbf_active() {
            m += 2 * n;
        }
        m
    }

    fn cbf_active(&self) -> bool {
        self.cfg.use_cbf && self.corridor.is_some()
    }

    /// Cost, constraint values and (optionally) derivatives at `w`.
    fn evaluate(&self, w: &[f64], derivs: bool) -> OcpData {
        let cfg = self.cfg;
        let n = cfg.horizon;
        let nw = self.nw();
        let m = self.n_cons();
        let dt = cfg.dt;
        let s_r = self.curve.total_length();

        let mut states = Vec::with_capacity(n + 1);
        states.push(self.x0);
        let mut sens: Vec<DMatrix<f64>> = Vec::with_capacity(n + 1);
        if derivs {
            sens.push(DMatrix::zeros(6, nw));
        }
        for k in 0..n {
            let u = Input::from_slice(&w[3 * k..3 * k + 3]);
            let (next, a, b) = linearize(&states[k], &u, dt);
            if derivs {
                let mut s = DMatrix::zeros(6, nw);
                // Only columns of earlier inputs are nonzero.
                let used = 3 * k;
                if used > 0 {
                    let prev = sens[k].columns(0, used);
                    s.columns_mut(0, used).copy_from(&(a * prev));
                }
                s.columns_mut(3 * k, 3).copy_from(&b);
                sens.push(s);
            }
            states.push(next);
        }

        let mut cost = 0.0;
        let mut grad = DVector::zeros(if derivs { nw } else { 0 });
        let mut hess = DMatrix::zeros(if derivs { nw } else { 0 }, if derivs { nw } else { 0 });
        let mut values = DVector::zeros(m);
        let mut jac = DMatrix::zeros(if derivs { m } else { 0 }, if derivs { nw } else { 0 });
        let row_grad = |k: usize, g: &[f64; 6]| -> DVector<f64> {
            let gv = nalgebra::Vector6::from_column_slice(g);
            sens[k].tr_mul(&gv)
        };

        // Tracking and progress terms.
        for k in 1..=n {
            let s = &states[k];
            let xi = s.xi_hat;
            let t = self.curve.tangent(xi);
            let nr = rot90(t);
            let kap = if (0.0..=s_r).contains(&xi) { self.curve.curvature(xi) } else { 0.0 };
            let e = Vec2::new(s.x, s.y) - reference_point(self.curve, xi);
            let (ec, el) = (nr.dot(&e), t.dot(&e));
            cost += cfg.q_c * ec * ec + cfg.q_l * el * el - cfg.q_nu * s.nu - cfg.q_xi * xi;
            if derivs {
                let gec = row_grad(k, &[nr.x, nr.y, 0.0, 0.0, -kap * el, 0.0]);
                let gel = row_grad(k, &[t.x, t.y, 0.0, 0.0, kap * ec - 1.0, 0.0]);
                grad.axpy(2.0 * cfg.q_c * ec, &gec, 1.0);
                grad.axpy(2.0 * cfg.q_l * el, &gel, 1.0);
                grad.axpy(-cfg.q_nu, &sens[k].row(5).transpose(), 1.0);
                grad.axpy(-cfg.q_xi, &sens[k].row(4).transpose(), 1.0);
                hess.ger(2.0 * cfg.q_c, &gec, &gec, 1.0);
                hess.ger(2.0 * cfg.q_l, &gel, &gel, 1.0);
            }
        }
        for k in 0..n {
            for i in 0..3 {
                let u = w[3 * k + i];
                let r = cfg.input_weight[i];
                cost += r * u * u;
                if derivs {
                    grad[3 * k + i] += 2.0 * r * u;
                    hess[(3 * k + i, 3 * k + i)] += 2.0 * r;
                }
            }
        }
        let delta = w[3 * n];
        cost += cfg.slack_weight * delta * delta;
        if derivs {
            grad[3 * n] += 2.0 * cfg.slack_weight * delta;
            hess[(3 * n, 3 * n)] += 2.0 * cfg.slack_weight;
        }

        // Constraint rows.
        let lo = cfg.input_lower();
        let hi = cfg.input_upper();
        let mut row = 0;
        for k in 0..n {
            for i in 0..3 {
                let u = w[3 * k + i];
                values[row] = u - lo[i];
                values[row + 1] = hi[i] - u;
                if derivs {
                    jac[(row, 3 * k + i)] = 1.0;
                    jac[(row + 1, 3 * k + i)] = -1.0;
                }
                row += 2;
            }
        }
        values[row] = delta;
        if derivs {
            jac[(row, 3 * n)] = 1.0;
        }
        row += 1;
        for k in 1..=n {
            let s = &states[k];
            let entries = [
                (s.v - cfg.v_min, 3, 1.0),
                (cfg.v_max - s.v, 3, -1.0),
                (s.nu, 5, 1.0),
                (cfg.nu_max - s.nu, 5, -1.0),
                (s_r - s.xi_hat, 4, -1.0),
            ];
            for (val, idx, sign) in entries {
                values[row] = val;
                if derivs {
                    let r = sens[k].row(idx) * sign;
                    jac.row_mut(row).copy_from(&r);
                }
                row += 1;
            }
        }
        if cfg.use_clf {
            let decay = 1.0 - self.clf.psi * dt;
            let lyap = |k: usize| {
                let s = &states[k];
                lyapunov(Vec2::new(s.x, s.y), s.xi_hat, self.curve, self.clf)
            };
            let mut prev = lyap(0);
            for k in 0..n {
                let next = lyap(k + 1);
                values[row] = decay * prev.0 + delta * dt - next.0;
                if derivs {
                    let g_next = [next.1[0], next.1[1], 0.0, 0.0, next.1[2], 0.0];
                    let g_prev = [prev.1[0], prev.1[1], 0.0, 0.0, prev.1[2], 0.0];
                    let mut r = row_grad(k, &g_prev) * decay - row_grad(k + 1, &g_next);
                    r[3 * n] += dt;
                    jac.row_mut(row).copy_from(&r.transpose());
                }
                prev = next;
                row += 1;
            }
        }
        let mut clamped = false;
        if let (true, Some(cor)) = (self.cfg.use_cbf, self.corridor) {
            let bars: Vec<_> = states
                .iter()
                .map(|s| {
                    clamped |= cor.outside(s.xi_hat);
                    cbf_pair_with_gradient(s, self.curve, cor, self.cbf)
                })
                .collect();
            for side in 0..2 {
                let alpha = if side == 0 { self.cbf.alpha_upper } else { self.cbf.alpha_lower };
                let pick = |k: usize| if side == 0 { bars[k].upper } else { bars[k].lower };
                // Already violated at x_0: only ask the barrier not to decrease.
                let decay = if pick(0).0 < 0.0 { 1.0 } else { 1.0 - alpha * dt };
                for k in 0..n {
                    let (h0, g0) = pick(k);
                    let (h1, g1) = pick(k + 1);
                    values[row] = h1 - decay * h0;
                    if derivs {
                        let r = row_grad(k + 1, &g1) - row_grad(k, &g0) * decay;
                        jac.row_mut(row).copy_from(&r.transpose());
                    }
                    row += 1;
                }
            }
        }
        debug_assert_eq!(row, m);

        OcpData {
            hessian: hess,
            gradient: grad,
            constraints: jac,
            bounds: -&values,
            states,
            cost,
            values,
            corridor_clamped: clamped,
        }
    }
}

fn violation_sum(values: &DVector<f64>) -> f64 {
    values.iter().map(|v| (-v).max(0.0)).sum()
}

fn violation_max(values: &DVector<f64>) -> f64 {
    values.iter().fold(0.0f64, |acc, v| acc.max(-v))
}

/// Powell-damped BFGS update keeping `b` positive semidefinite.
fn damped_bfgs(b: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>) {
    let bs = &*b * s;
    let sbs = s.dot(&bs);
    let sy = s.dot(y);
    let ss = s.norm_squared();
    if ss < 1e-20 {
        return;
    }
    let y = if sy >= 0.2 * sbs {
        y.clone()
    } else if sbs > 1e-12 * ss {
        let theta = 0.8 * sbs / (sbs - sy);
        y * theta + &bs * (1.0 - theta)
    } else {
        return;
    };
    let sy = s.dot(&y);
    if sy <= 1e-12 * ss {
        return;
    }
    if sbs > 1e-12 * ss {
        b.ger(-1.0 / sbs, &bs, &bs, 1.0);
    }
    b.ger(1.0 / sy, &y, &y, 1.0);
}

/// Linearise the OCP about the rollout of `iterate` (inputs then `δ`).
pub fn assemble_ocp(
    cfg: &MpccConfig,
    x0: &AugmentedState,
    curve: &PlanarCurve,
    corridor: Option<&Corridor>,
    clf: &ClfParams,
    cbf: &CbfParams,
    iterate: &[f64],
) -> OcpData {
    let p = Problem {
        cfg,
        x0: *x0,
        curve,
        corridor,
        clf,
        cbf,
    };
    assert_eq!(iterate.len(), p.nw(), "iterate must hold 3N inputs and δ");
    p.evaluate(iterate, true)
}

/// Initial iterate: the warm start `(inputs, δ)` (missing stages padded
/// with the last input), or without one a rollout that stops and turns in
/// place towards the reference tangent. Position and progress of that guess
/// are those of braking, while its heading gives the solver a descent
/// direction in `a`. The barriers scale with `exp(∓n·e_θ)`, so with barrier
/// rows the turn rate stays below the smaller gain, which keeps the per-step
/// change of `ln h` within the allowed decay. Either guess is projected so speed,
/// progress rate and progress stay inside their bounds along the rollout.
fn initial_iterate(
    cfg: &MpccConfig,
    x0: &AugmentedState,
    curve: &PlanarCurve,
    turn_cap: f64,
    warm: Option<(&[Input], f64)>,
) -> Vec<f64> {
    let n = cfg.horizon;
    let dt = cfg.dt;
    let s_r = curve.total_length();
    let lo = cfg.input_lower();
    let hi = cfg.input_upper();
    let mut w = vec![0.0; 3 * n + 1];
    if let Some((_, delta)) = warm {
        w[3 * n] = delta.max(0.0);
    }
    let mut s = *x0;
    for k in 0..n {
        let mut u = match warm {
            Some((inputs, _)) => inputs.get(k).or(inputs.last()).copied().unwrap_or_default().as_array(),
            None => {
                let t = curve.tangent(s.xi_hat.clamp(0.0, s_r));
                let e = wrap_angle(t.y.atan2(t.x) - s.theta);
                [-s.v / dt, (2.0 * e).clamp(-turn_cap, turn_cap), -s.nu / dt]
            }
        };
        let a_lo = lo[0].max((cfg.v_min - s.v) / dt);
        let a_hi = hi[0].min((cfg.v_max - s.v) / dt);
        u[0] = u[0].min(a_hi).max(a_lo.min(a_hi));
        u[1] = u[1].clamp(lo[1], hi[1]);
        let xi_next = s.xi_hat + s.nu * dt;
        let nu_cap = cfg.nu_max.min((s_r - xi_next) / dt).max(0.0);
        let d_lo = lo[2].max(-s.nu / dt);
        let d_hi = hi[2].min((nu_cap - s.nu) / dt);
        u[2] = u[2].min(d_hi).max(d_lo.min(d_hi));
        w[3 * k..3 * k + 3].copy_from_slice(&u);
        s = dynamics_discrete(&s, &Input::new(u[0], u[1], u[2]), dt);
    }
    w
}

/// Solve the OCP by SQP from an optional warm start `(inputs, δ)`.
pub fn solve(
    cfg: &MpccConfig,
    x0: &AugmentedState,
    curve: &PlanarCurve,
    corridor: Option<&Corridor>,
    clf: &ClfParams,
    cbf: &CbfParams,
    warm_start: Option<(&[Input], f64)>,
) -> MpccSolution {
    let started = Instant::now();
    let p = Problem {
        cfg,
        x0: *x0,
        curve,
        corridor,
        clf,
        cbf,
    };
    let n = cfg.horizon;
    let turn_cap = if p.cbf_active() {
        0.9 * cbf.alpha_upper.min(cbf.alpha_lower)
    } else {
        cfg.omega_max
    };
    let mut w = initial_iterate(cfg, x0, curve, turn_cap, warm_start);
    let qp_opts = QpOptions {
        tol: 1e-10,
        max_iter: 20 * p.n_cons() + 200,
    };
    let mut mu: f64 = 1.0;
    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0;
    let mut kkt = f64::INFINITY;
    let mut data = p.evaluate(&w, true);
    // Curvature missing from the Gauss-Newton model, built by damped BFGS.
    let mut correction = DMatrix::zeros(p.nw(), p.nw());
    while iterations < cfg.sqp_iters {
        iterations += 1;
        let hessian = &data.hessian + &correction;
        let qp = solve_qp(&hessian, &data.gradient, &data.constraints, &data.bounds, qp_opts);
        match qp.status {
            QpStatus::Infeasible => {
                status = SolveStatus::Infeasible;
                break;
            }
            QpStatus::MaxIter => break,
            QpStatus::Optimal => {}
        }
        // Stationarity and complementarity of the NLP with the QP multipliers.
        let stat = (&data.gradient - data.constraints.tr_mul(&qp.multipliers)).amax();
        let comp = qp.multipliers.iter().zip(data.values.iter()).fold(0.0f64, |a, (l, c)| a.max((l * c).abs()));
        kkt = stat.max(comp);
        let dw = qp.x;
        let step = dw.amax();
        if step <= STEP_TOL && violation_max(&data.values) <= cfg.qp_tol {
            status = SolveStatus::Optimal;
            break;
        }
        mu = mu.max(1.5 * qp.multipliers.amax() + 1.0);
        let viol0 = violation_sum(&data.values);
        let phi0 = data.cost + mu * viol0;
        let slope = data.gradient.dot(&dw) - mu * viol0;
        let mut t = 1.0;
        let mut accepted = None;
        let shifted = |d: &DVector<f64>, t: f64| -> Vec<f64> { w.iter().zip(d.iter()).map(|(a, b)| a + t * b).collect() };
        for _ in 0..=MAX_BACKTRACKS {
            let trial = shifted(&dw, t);
            let ev = p.evaluate(&trial, false);
            let phi = ev.cost + mu * violation_sum(&ev.values);
            if phi <= phi0 + ARMIJO * t * slope.min(0.0) {
                accepted = Some(trial);
                break;
            }
            t *= BACKTRACK;
        }
        let Some(next) = accepted else { break };
        let lagrangian_grad = |d: &OcpData| &d.gradient - d.constraints.tr_mul(&qp.multipliers);
        let before = lagrangian_grad(&data);
        w = next;
        data = p.evaluate(&w, true);
        let sk = &dw * t;
        let yk = lagrangian_grad(&data) - before - &data.hessian * &sk;
        damped_bfgs(&mut correction, &sk, &yk);
        if t * step <= STEP_TOL && violation_max(&data.values) <= cfg.qp_tol {
            status = SolveStatus::Optimal;
            break;
        }
    }
    let violation = violation_max(&data.values);
    if status == SolveStatus::Optimal && violation > cfg.qp_tol {
        status = SolveStatus::MaxIter;
    }
    MpccSolution {
        inputs: (0..n).map(|k| Input::from_slice(&w[3 * k..3 * k + 3])).collect(),
        delta: w[3 * n],
        states: data.states,
        status,
        iterations,
        kkt_residual: kkt,
        constraint_violation: violation,
        solve_time: started.elapsed().as_secs_f64(),
        corridor_clamped: data.corridor_clamped,
    }
}

/// Stateful controller: keeps the previous solution for shifted warm starts.
#[derive(Debug, Clone)]
pub struct Mpcc {
    pub config: MpccConfig,
    previous: Option<(Vec<Input>, f64)>,
}

impl Mpcc {
    pub fn new(config: MpccConfig) -> Self {
        Self { config, previous: None }
    }

    pub fn reset(&mut self) {
        self.previous = None;
    }

    pub fn solve(
        &mut self,
        x0: &AugmentedState,
        curve: &PlanarCurve,
        corridor: Option<&Corridor>,
        clf: &ClfParams,
        cbf: &CbfParams,
    ) -> MpccSolution {
        let warm = self.previous.as_ref().map(|(u, d)| (u.as_slice(), *d));
        let sol = solve(&self.config, x0, curve, corridor, clf, cbf, warm);
        if sol.status == SolveStatus::Infeasible {
            self.previous = None;
        } else {
            // Shift by one stage, repeating the final input.
            let mut shifted: Vec<Input> = sol.inputs[1..].to_vec();
            shifted.push(*sol.inputs.last().unwrap());
            self.previous = Some((shifted, sol.delta));
        }
        sol
    }
}
