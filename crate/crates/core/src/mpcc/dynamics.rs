//! Unicycle with virtual progress: `x = (x, y, θ, v, ξ̂, ν)`, `u = (a, ω, ν̇)`.

use std::ops::AddAssign;

use nalgebra::{Matrix6, Matrix6x3, SMatrix, Vector4};

use super::{AugmentedState, Input};

/// `ẋ = f(x) + g(x)u = (v cos θ, v sin θ, ω, a, ν, ν̇)`.
pub fn dynamics_continuous(s: &AugmentedState, u: &Input) -> [f64; 6] {
    [
        s.v * s.theta.cos(),
        s.v * s.theta.sin(),
        u.omega,
        u.a,
        s.nu,
        u.nudot,
    ]
}

/// Wrap an angle into `[−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    if (-PI..=PI).contains(&a) {
        return a;
    }
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w == -PI && a > 0.0 {
        PI
    } else {
        w
    }
}

/// RK4 over `(x, y, θ, v)`, carrying the Jacobian with respect to
/// `(x, y, θ, v, a, ω)`.
fn rk4_planar(p: Vector4<f64>, a: f64, omega: f64, dt: f64) -> (Vector4<f64>, SMatrix<f64, 4, 6>) {
    let f = |s: &Vector4<f64>| Vector4::new(s[3] * s[2].cos(), s[3] * s[2].sin(), omega, a);
    // Jacobian of f with respect to (state, a, ω) at s.
    let jf = |s: &Vector4<f64>| {
        let (st, ct) = s[2].sin_cos();
        let mut j = SMatrix::<f64, 4, 6>::zeros();
        j[(0, 2)] = -s[3] * st;
        j[(0, 3)] = ct;
        j[(1, 2)] = s[3] * ct;
        j[(1, 3)] = st;
        j[(2, 5)] = 1.0;
        j[(3, 4)] = 1.0;
        j
    };
    // d(state)/d(state, a, ω) for the initial point.
    let mut ds0 = SMatrix::<f64, 4, 6>::zeros();
    for i in 0..4 {
        ds0[(i, i)] = 1.0;
    }
    // Stage derivative: dk = Jf_s · dS + Jf_u, where Jf splits columns 0..4 / 4..6.
    let stage = |s: &Vector4<f64>, ds: &SMatrix<f64, 4, 6>| {
        let j = jf(s);
        let js = j.fixed_view::<4, 4>(0, 0);
        let mut dk = js * ds;
        dk.fixed_view_mut::<4, 2>(0, 4).add_assign(&j.fixed_view::<4, 2>(0, 4));
        (f(s), dk)
    };
    let (k1, d1) = stage(&p, &ds0);
    let s2 = p + k1 * (0.5 * dt);
    let (k2, d2) = stage(&s2, &(ds0 + d1 * (0.5 * dt)));
    let s3 = p + k2 * (0.5 * dt);
    let (k3, d3) = stage(&s3, &(ds0 + d2 * (0.5 * dt)));
    let s4 = p + k3 * dt;
    let (k4, d4) = stage(&s4, &(ds0 + d3 * dt));
    let next = p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    let jac = ds0 + (d1 + d2 * 2.0 + d3 * 2.0 + d4) * (dt / 6.0);
    (next, jac)
}

/// One step of the discrete model: RK4 for `(x, y, θ, v)`, the exact Euler
/// updates `ξ̂ += νΔt`, `ν += ν̇Δt` for the progress states, θ wrapped.
pub fn dynamics_discrete(s: &AugmentedState, u: &Input, dt: f64) -> AugmentedState {
    linearize(s, u, dt).0
}

/// Next state with `A = ∂x⁺/∂x` and `B = ∂x⁺/∂u`.
pub fn linearize(s: &AugmentedState, u: &Input, dt: f64) -> (AugmentedState, Matrix6<f64>, Matrix6x3<f64>) {
    let (p, jp) = rk4_planar(Vector4::new(s.x, s.y, s.theta, s.v), u.a, u.omega, dt);
    let next = AugmentedState {
        x: p[0],
        y: p[1],
        theta: wrap_angle(p[2]),
        v: p[3],
        xi_hat: s.xi_hat + s.nu * dt,
        nu: s.nu + u.nudot * dt,
    };
    let mut a = Matrix6::zeros();
    let mut b = Matrix6x3::zeros();
    for i in 0..4 {
        for j in 0..4 {
            a[(i, j)] = jp[(i, j)];
        }
        b[(i, 0)] = jp[(i, 4)];
        b[(i, 1)] = jp[(i, 5)];
    }
    a[(4, 4)] = 1.0;
    a[(4, 5)] = dt;
    a[(5, 5)] = 1.0;
    b[(5, 2)] = dt;
    (next, a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(x: f64, y: f64, theta: f64, v: f64, xi: f64, nu: f64) -> AugmentedState {
        AugmentedState { x, y, theta, v, xi_hat: xi, nu }
    }

    #[test]
    fn continuous_examples() {
        let d = dynamics_continuous(&st(0.0, 0.0, 0.0, 1.0, 0.0, 0.7), &Input::default());
        assert_eq!(d, [1.0, 0.0, 0.0, 0.0, 0.7, 0.0]);
        let d = dynamics_continuous(&AugmentedState::default(), &Input::new(1.0, 0.0, 0.0));
        assert_eq!(d, [0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn straight_drive_and_turn() {
        let n = dynamics_discrete(&st(0.0, 0.0, 0.0, 1.0, 0.0, 0.0), &Input::default(), 0.1);
        assert!((n.x - 0.1).abs() < 1e-9 && n.y.abs() < 1e-12);
        let n = dynamics_discrete(&st(0.0, 0.0, 0.0, 0.0, 0.0, 0.0), &Input::new(0.0, std::f64::consts::PI, 0.0), 0.1);
        assert!((n.theta - 0.1 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn progress_rows_are_euler() {
        let n = dynamics_discrete(&st(0.0, 0.0, 0.0, 0.0, 1.0, 0.5), &Input::new(0.0, 0.0, 2.0), 0.1);
        assert_eq!(n.xi_hat, 1.0 + 0.5 * 0.1);
        assert_eq!(n.nu, 0.5 + 2.0 * 0.1);
    }

    #[test]
    fn wrap() {
        use std::f64::consts::PI;
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.3), 0.3);
        assert!((wrap_angle(-7.0) - (-7.0 + 2.0 * PI)).abs() < 1e-12);
    }
}
