//! Model predictive contour control with discrete-time CLF and corridor CBF
//! constraints, solved by SQP over a dense QP.

mod dynamics;
mod ocp;
pub mod qp;

pub use dynamics::{dynamics_continuous, dynamics_discrete, linearize, wrap_angle};
pub use ocp::{assemble_ocp, solve, Mpcc, OcpData};

use crate::error::{Error, Result};

/// Plant state extended with the virtual progress states.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AugmentedState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub xi_hat: f64,
    pub nu: f64,
}

impl AugmentedState {
    pub fn position(&self) -> crate::geometry::Vec2 {
        crate::geometry::Vec2::new(self.x, self.y)
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.x, self.y, self.theta, self.v, self.xi_hat, self.nu]
    }
}

/// `(a, ω, ν̇)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Input {
    pub a: f64,
    pub omega: f64,
    pub nudot: f64,
}

impl Input {
    pub fn new(a: f64, omega: f64, nudot: f64) -> Self {
        Self { a, omega, nudot }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.a, self.omega, self.nudot]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self::new(s[0], s[1], s[2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpccConfig {
    pub horizon: usize,
    pub dt: f64,
    pub q_c: f64,
    pub q_l: f64,
    pub q_nu: f64,
    /// Per-stage reward on the progress position `ξ̂`; makes early progress
    /// preferable when the end of the reference is within reach.
    pub q_xi: f64,
    /// Weight `p` on the squared CLF slack.
    pub slack_weight: f64,
    /// Quadratic input regularisation on `(a, ω, ν̇)`.
    pub input_weight: [f64; 3],
    pub nu_max: f64,
    pub nudot_max: f64,
    pub a_max: f64,
    pub omega_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub sqp_iters: usize,
    pub qp_tol: f64,
    /// Impose the corridor barrier rows.
    pub use_cbf: bool,
    /// Impose the Lyapunov decrease rows.
    pub use_clf: bool,
}

impl Default for MpccConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            dt: 0.1,
            q_c: 5.0,
            q_l: 500.0,
            q_nu: 1.0,
            q_xi: 0.3,
            slack_weight: 1000.0,
            input_weight: [1e-2, 1e-2, 1e-3],
            nu_max: 2.0,
            nudot_max: 2.0,
            a_max: 2.0,
            omega_max: 2.5,
            v_min: 0.0,
            v_max: 2.0,
            sqp_iters: 50,
            qp_tol: 1e-6,
            use_cbf: true,
            use_clf: true,
        }
    }
}

impl MpccConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            self.dt,
            self.q_c,
            self.q_l,
            self.q_nu,
            self.slack_weight,
            self.nudot_max,
            self.a_max,
            self.omega_max,
            self.v_max,
            self.qp_tol,
        ];
        if self.horizon < 2 {
            return Err(Error::InvalidInput(format!("horizon must be ≥ 2, got {}", self.horizon)));
        }
        if pos.iter().any(|v| !(*v > 0.0 && v.is_finite())) || !(self.nu_max >= 0.0) {
            return Err(Error::InvalidInput(format!("MPCC parameters must be positive: {self:?}")));
        }
        if !(self.q_xi >= 0.0 && self.q_xi.is_finite()) {
            return Err(Error::InvalidInput(format!("q_xi must be non-negative, got {}", self.q_xi)));
        }
        if self.input_weight.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidInput("input weights must be positive".into()));
        }
        if self.q_l < 10.0 * self.q_c {
            return Err(Error::InvalidInput(format!(
                "lag weight q_l = {} must be at least 10·q_c = {}",
                self.q_l,
                10.0 * self.q_c
            )));
        }
        if !(self.v_min >= 0.0 && self.v_min < self.v_max) || self.sqp_iters == 0 {
            return Err(Error::InvalidInput("bad velocity bounds or zero SQP iterations".into()));
        }
        Ok(())
    }

    pub fn input_lower(&self) -> [f64; 3] {
        [-self.a_max, -self.omega_max, -self.nudot_max]
    }

    pub fn input_upper(&self) -> [f64; 3] {
        [self.a_max, self.omega_max, self.nudot_max]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpccSolution {
    pub states: Vec<AugmentedState>,
    pub inputs: Vec<Input>,
    /// The single CLF slack, shared by all stages.
    pub delta: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// Largest violation of any (nonlinear) stage constraint at the returned iterate.
    pub constraint_violation: f64,
    pub solve_time: f64,
    /// Some CBF row evaluated the corridor beyond its interval.
    pub corridor_clamped: bool,
}

/// Maximal braking: `a = −a_max·sign(v)`, no turning, and the progress rate
/// braked towards zero as well so `ξ̂` cannot run ahead of a stopping robot.
pub fn fallback_control(s: &AugmentedState, cfg: &MpccConfig) -> (Input, u8) {
    let a = if s.v > 0.0 {
        -cfg.a_max
    } else if s.v < 0.0 {
        cfg.a_max
    } else {
        0.0
    };
    let nudot = -cfg.nudot_max.min(s.nu.max(0.0) / cfg.dt);
    (Input::new(a, 0.0, nudot), 1)
}

/// Plant step: the controller model followed by clamping `v`, `ν` and `ξ̂`
/// into their bounds. Returns whether any clamp was active.
pub fn step_plant(s: &AugmentedState, u: &Input, cfg: &MpccConfig, s_r: f64) -> (AugmentedState, bool) {
    let mut n = dynamics_discrete(s, u, cfg.dt);
    let raw = n;
    n.v = n.v.clamp(cfg.v_min, cfg.v_max);
    n.nu = n.nu.clamp(0.0, cfg.nu_max);
    n.xi_hat = n.xi_hat.clamp(0.0, s_r);
    (n, n != raw)
}
