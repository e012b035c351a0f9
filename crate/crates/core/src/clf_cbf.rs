//! Lyapunov and barrier functions for path following inside a corridor.
//!
//! With `ε = p − r(ξ̂)`, the contour and lag errors are `e_c = n_r·ε` and
//! `e_l = t_r·ε`. Along the curve `∂e_c/∂ξ = −κe_l` and `∂e_l/∂ξ = κe_c − 1`.
//! Gradients use the state order `(x, y, θ, v, ξ̂, ν)`.

use nalgebra::{DMatrix, DVector};

use crate::corridor::Corridor;
use crate::error::{Error, Result};
use crate::geometry::{PlanarCurve, Vec2};
use crate::mpcc::qp::{solve_qp, QpOptions, QpStatus};
use crate::mpcc::{dynamics_continuous, AugmentedState, Input};

/// Weights and decay rate of `V = λ_c e_c² + λ_l e_l²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClfParams {
    pub lambda_c: f64,
    pub lambda_l: f64,
    pub psi: f64,
}

impl Default for ClfParams {
    fn default() -> Self {
        Self {
            lambda_c: 1.0,
            lambda_l: 1.0,
            psi: 1.0,
        }
    }
}

impl ClfParams {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_c > 0.0 && self.lambda_l > 0.0 && self.psi > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("CLF parameters must be positive: {self:?}")))
        }
    }
}

/// Barrier gains and shaping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbfParams {
    pub alpha_upper: f64,
    pub alpha_lower: f64,
    /// Velocity shaping `λ`; requires `v·λ < 1` on reachable speeds.
    pub lambda: f64,
    pub r_o: f64,
    pub alpha_bounds: (f64, f64),
}

impl Default for CbfParams {
    fn default() -> Self {
        Self {
            alpha_upper: 0.25,
            alpha_lower: 0.25,
            lambda: 0.4,
            r_o: 0.15,
            alpha_bounds: (0.05, 0.25),
        }
    }
}

impl CbfParams {
    pub fn validate(&self, v_max: f64) -> Result<()> {
        let (lo, hi) = self.alpha_bounds;
        let ok = lo > 0.0
            && lo <= hi
            && (lo..=hi).contains(&self.alpha_upper)
            && (lo..=hi).contains(&self.alpha_lower)
            && self.lambda > 0.0
            && self.lambda * v_max < 1.0
            && self.r_o > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "CBF parameters out of range (v_max {v_max}): {self:?}"
            )))
        }
    }
}

/// `(|e_c|, e_l)`: unsigned contour error and signed lag error.
pub fn contour_lag_errors(p: Vec2, xi_hat: f64, curve: &PlanarCurve) -> (f64, f64) {
    let (ec, el) = signed_errors(p, xi_hat, curve);
    (ec.abs(), el)
}

/// Reference point for error terms: `r(ξ)` inside the parameter range,
/// continued along the end tangent outside it so that `∂r/∂ξ = t_r` everywhere.
pub fn reference_point(curve: &PlanarCurve, xi: f64) -> Vec2 {
    let c = xi.clamp(0.0, curve.total_length());
    curve.evaluate(c) + curve.tangent(c) * (xi - c)
}

/// `(e_c, e_l)` with the contour error signed along `n_r`.
pub fn signed_errors(p: Vec2, xi_hat: f64, curve: &PlanarCurve) -> (f64, f64) {
    let e = p - reference_point(curve, xi_hat);
    let t = curve.tangent(xi_hat);
    (crate::geometry::rot90(t).dot(&e), t.dot(&e))
}

/// `d̂ = n_r(ξ̂)·(p − r(ξ̂))`, positive on the counter-clockwise side.
pub fn signed_normal_error(p: Vec2, xi_hat: f64, curve: &PlanarCurve) -> f64 {
    signed_errors(p, xi_hat, curve).0
}

/// `V` and its gradient with respect to `(x, y, ξ̂)`.
pub fn lyapunov(p: Vec2, xi_hat: f64, curve: &PlanarCurve, params: &ClfParams) -> (f64, [f64; 3]) {
    let t = curve.tangent(xi_hat);
    let n = crate::geometry::rot90(t);
    let k = curve_kappa(curve, xi_hat);
    let e = p - reference_point(curve, xi_hat);
    let (ec, el) = (n.dot(&e), t.dot(&e));
    let (lc, ll) = (params.lambda_c, params.lambda_l);
    let v = lc * ec * ec + ll * el * el;
    let gp = n * (2.0 * lc * ec) + t * (2.0 * ll * el);
    let gxi = 2.0 * lc * ec * (-k * el) + 2.0 * ll * el * (k * ec - 1.0);
    (v, [gp.x, gp.y, gxi])
}

/// Curvature, zero outside the parameter range where the reference is straight.
fn curve_kappa(curve: &PlanarCurve, xi: f64) -> f64 {
    if xi < 0.0 || xi > curve.total_length() {
        0.0
    } else {
        curve.curvature(xi)
    }
}

/// Plain corridor barriers `(d̄ − d̂, d̲ + d̂)`.
pub fn relative_degree_one_cbfs(p: Vec2, xi_hat: f64, curve: &PlanarCurve, corridor: &Corridor) -> (f64, f64) {
    let d = signed_normal_error(p, xi_hat, curve);
    (corridor.d_upper(xi_hat) - d, corridor.d_lower(xi_hat) + d)
}

/// Unicycle barrier pair
/// `h̄ = (d̄ − d̂ − r_o)·exp(−n_r·e_θ − vλ)`, `h̲ = (d̲ + d̂ − r_o)·exp(n_r·e_θ − vλ)`.
pub fn cbf_pair(s: &AugmentedState, curve: &PlanarCurve, corridor: &Corridor, params: &CbfParams) -> (f64, f64) {
    let g = cbf_pair_with_gradient(s, curve, corridor, params);
    (g.upper.0, g.lower.0)
}

/// Barrier values with gradients over `(x, y, θ, v, ξ̂, ν)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierGradients {
    pub upper: (f64, [f64; 6]),
    pub lower: (f64, [f64; 6]),
}

pub fn cbf_pair_with_gradient(
    s: &AugmentedState,
    curve: &PlanarCurve,
    corridor: &Corridor,
    params: &CbfParams,
) -> BarrierGradients {
    let xi = s.xi_hat;
    let t = curve.tangent(xi);
    let n = crate::geometry::rot90(t);
    let k = curve_kappa(curve, xi);
    let e = Vec2::new(s.x, s.y) - reference_point(curve, xi);
    let (dh, el) = (n.dot(&e), t.dot(&e));
    let eth = Vec2::new(s.theta.cos(), s.theta.sin());
    let n_e = n.dot(&eth);
    let t_e = t.dot(&eth);
    let lam = params.lambda;
    let (du, du_s) = corridor.d_upper_with_slope(xi);
    let (dl, dl_s) = corridor.d_lower_with_slope(xi);

    // Upper: A = d̄ − d̂ − r_o, E = exp(−n·e_θ − vλ).
    let a = du - dh - params.r_o;
    let ee = (-n_e - s.v * lam).exp();
    let hu = a * ee;
    let gu = [
        -n.x * ee,
        -n.y * ee,
        -hu * t_e,
        -lam * hu,
        (du_s + k * el) * ee + hu * k * t_e,
        0.0,
    ];
    // Lower: B = d̲ + d̂ − r_o, F = exp(n·e_θ − vλ).
    let b = dl + dh - params.r_o;
    let ff = (n_e - s.v * lam).exp();
    let hl = b * ff;
    let gl = [
        n.x * ff,
        n.y * ff,
        hl * t_e,
        -lam * hl,
        (dl_s - k * el) * ff - hl * k * t_e,
        0.0,
    ];
    BarrierGradients {
        upper: (hu, gu),
        lower: (hl, gl),
    }
}

/// `ḣ = L_f h + L_g h·u` for one barrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LieDerivative {
    pub h: f64,
    pub lf: f64,
    /// Row over `(a, ω, ν̇)`.
    pub lg: [f64; 3],
}

impl LieDerivative {
    pub fn total(&self, u: &Input) -> f64 {
        self.lf + self.lg[0] * u.a + self.lg[1] * u.omega + self.lg[2] * u.nudot
    }
}

fn lie_from_gradient(h: f64, grad: &[f64; 6], s: &AugmentedState) -> LieDerivative {
    let drift = dynamics_continuous(s, &Input::default());
    let lf = grad.iter().zip(drift.iter()).map(|(g, f)| g * f).sum();
    // g(x) maps a → v, ω → θ, ν̇ → ν.
    LieDerivative {
        h,
        lf,
        lg: [grad[3], grad[2], grad[5]],
    }
}

/// Lie derivatives of `(h̄, h̲)` for the unicycle; `L_g h̄ = h̄·[−λ, −t_r·e_θ, 0]`.
pub fn cbf_lie_derivatives(
    s: &AugmentedState,
    curve: &PlanarCurve,
    corridor: &Corridor,
    params: &CbfParams,
) -> (LieDerivative, LieDerivative) {
    let g = cbf_pair_with_gradient(s, curve, corridor, params);
    (
        lie_from_gradient(g.upper.0, &g.upper.1, s),
        lie_from_gradient(g.lower.0, &g.lower.1, s),
    )
}

/// Lie derivative of `V`; `L_g V = 0` since inputs act on neither `p` nor `ξ̂` directly.
pub fn clf_lie_derivative(s: &AugmentedState, curve: &PlanarCurve, params: &ClfParams) -> LieDerivative {
    let (v, g) = lyapunov(Vec2::new(s.x, s.y), s.xi_hat, curve, params);
    let grad = [g[0], g[1], 0.0, 0.0, g[2], 0.0];
    lie_from_gradient(v, &grad, s)
}

/// Affine barrier row `lf + lg·u + α·h ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierRow {
    pub lf: f64,
    pub lg: Vec<f64>,
    pub h: f64,
    pub alpha: f64,
}

/// Affine Lyapunov row `lf + lg·u + ψ·V ≤ δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovRow {
    pub lf: f64,
    pub lg: Vec<f64>,
    pub v: f64,
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub input: Vec<f64>,
    pub delta: f64,
    pub kkt_residual: f64,
    /// Indices of barrier rows active at the optimum.
    pub active_barriers: Vec<usize>,
}

/// `min ½‖u − k‖² + p·δ²` subject to the Lyapunov row (slacked by δ) and
/// every barrier row (hard).
pub fn qp_filter(nominal: &[f64], clf: Option<&LyapunovRow>, cbfs: &[BarrierRow], slack_weight: f64) -> Result<FilterOutput> {
    let m = nominal.len();
    let n = m + 1;
    let mut h = DMatrix::identity(n, n);
    h[(m, m)] = 2.0 * slack_weight;
    let mut g = DVector::zeros(n);
    for i in 0..m {
        g[i] = -nominal[i];
    }
    let rows = cbfs.len() + clf.is_some() as usize;
    let mut c = DMatrix::zeros(rows, n);
    let mut b = DVector::zeros(rows);
    for (r, row) in cbfs.iter().enumerate() {
        if row.lg.len() != m {
            return Err(Error::InvalidInput("barrier row width differs from input size".into()));
        }
        for j in 0..m {
            c[(r, j)] = row.lg[j];
        }
        b[r] = -row.lf - row.alpha * row.h;
    }
    if let Some(l) = clf {
        let r = cbfs.len();
        for j in 0..m {
            c[(r, j)] = -l.lg[j];
        }
        c[(r, m)] = 1.0;
        b[r] = l.lf + l.psi * l.v;
    }
    let all = h.iter().chain(g.iter()).chain(c.iter()).chain(b.iter()).all(|v| v.is_finite());
    if !all {
        return Err(Error::InvalidInput("non-finite QP data".into()));
    }
    let sol = solve_qp(&h, &g, &c, &b, QpOptions::default());
    match sol.status {
        QpStatus::Optimal => Ok(FilterOutput {
            input: sol.x.as_slice()[..m].to_vec(),
            delta: sol.x[m],
            kkt_residual: sol.kkt_residual,
            active_barriers: sol.active.iter().copied().filter(|&i| i < cbfs.len()).collect(),
        }),
        QpStatus::Infeasible => Err(Error::Infeasible("barrier constraints are mutually infeasible".into())),
        QpStatus::MaxIter => Err(Error::Numerical("QP filter hit its iteration limit".into())),
    }
}

/// Minimally modify a nominal unicycle input `(a, ω, ν̇)` so the corridor
/// barriers and the (slacked) Lyapunov decrease condition hold.
pub fn clf_cbf_qp_filter(
    nominal: &Input,
    s: &AugmentedState,
    curve: &PlanarCurve,
    corridor: &Corridor,
    clf: &ClfParams,
    cbf: &CbfParams,
    slack_weight: f64,
) -> Result<(Input, f64)> {
    let (up, lo) = cbf_lie_derivatives(s, curve, corridor, cbf);
    let v = clf_lie_derivative(s, curve, clf);
    let rows = [
        BarrierRow {
            lf: up.lf,
            lg: up.lg.to_vec(),
            h: up.h,
            alpha: cbf.alpha_upper,
        },
        BarrierRow {
            lf: lo.lf,
            lg: lo.lg.to_vec(),
            h: lo.h,
            alpha: cbf.alpha_lower,
        },
    ];
    let lyap = LyapunovRow {
        lf: v.lf,
        lg: v.lg.to_vec(),
        v: v.h,
        psi: clf.psi,
    };
    let out = qp_filter(&[nominal.a, nominal.omega, nominal.nudot], Some(&lyap), &rows, slack_weight)?;
    Ok((Input::new(out.input[0], out.input[1], out.input[2]), out.delta))
}
