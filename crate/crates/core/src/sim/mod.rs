//! Closed-loop episodes at the control rate, benchmark batches, and trace
//! and plot output.
//!
//! Each cycle: scan the true map into the belief map, check the goal,
//! replan when due (progress made, plan blocked, or robot standing), rebuild the corridor on the current plan, adapt the
//! barrier gains (`cbf_sac`), solve the MPCC (or brake on failure), step the
//! plant, and check for collision.

mod bench;
mod plot;
mod trace;

pub use bench::{benchmark, benchmark_episodes, jittered_start, summarize, summary_csv, write_summary, BenchmarkRow, VariantSummary};
pub use plot::{render_svg, write_svg, PlotData};
pub use trace::{parse_trace, trace_csv, write_trace, TraceRow, TRACE_HEADER};

use std::str::FromStr;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;

use crate::clf_cbf::{cbf_pair, signed_normal_error, CbfParams, ClfParams};
use crate::corridor::{fit_corridor, fit_corridor_with_floor, sample_offsets, sampling_step, shrink_to_regular, Corridor};
use crate::error::{Error, Result};
use crate::geometry::PlanarCurve;
use crate::mpcc::{fallback_control, step_plant, AugmentedState, Input, Mpcc, MpccConfig, SolveStatus};
use crate::planner::plan;
use crate::rng::seeded;
use crate::sac::{apply_action, GaussianPolicy, SacAction, SacConfig, SacObservation};
use crate::world::{simulate_scan, Costmap, Pose};
use crate::Vec2;

/// Clearance requested between the robot disc and the corridor at its start.
const START_MARGIN: f64 = 0.05;
/// Speed and progress rate below which the robot counts as standing.
const STALL_SPEED: f64 = 1e-2;
/// Standing cycles away from the goal that force a replan.
const STALL_STEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Contour control without barrier rows.
    Base,
    /// Barrier rows with constant gains.
    CbfFixed,
    /// Barrier rows with policy-adapted gains.
    CbfSac,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Base, Variant::CbfFixed, Variant::CbfSac];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::CbfFixed => "cbf_fixed",
            Variant::CbfSac => "cbf_sac",
        }
    }

    pub fn uses_cbf(&self) -> bool {
        !matches!(self, Variant::Base)
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Variant::Base),
            "cbf_fixed" => Ok(Variant::CbfFixed),
            "cbf_sac" => Ok(Variant::CbfSac),
            _ => Err(Error::InvalidInput(format!(
                "unknown variant {s:?} (expected base, cbf_fixed or cbf_sac)"
            ))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Collision,
    PlannerFailure,
    Timeout,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Collision => "collision",
            Outcome::PlannerFailure => "planner_failure",
            Outcome::Timeout => "timeout",
        }
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "success" => Ok(Outcome::Success),
            "collision" => Ok(Outcome::Collision),
            "planner_failure" => Ok(Outcome::PlannerFailure),
            "timeout" => Ok(Outcome::Timeout),
            _ => Err(Error::InvalidInput(format!("unknown outcome {s:?}"))),
        }
    }
}

/// Everything an episode needs besides the world.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub mpcc: MpccConfig,
    pub clf: ClfParams,
    /// Barrier parameters; the gains here are the initial `α₀`.
    pub cbf: CbfParams,
    pub sac: SacConfig,
    pub goal_tolerance: f64,
    pub max_steps: usize,
    /// Replan once this much progress was made along the current plan.
    pub replan_distance: f64,
    /// Plan truncation length `s_max`.
    pub plan_length: f64,
    /// Obstacle clearance the global plan must keep.
    pub plan_clearance: f64,
    /// Curvature bound `κ⁺` for the corridor sampling step.
    pub kappa_max: f64,
    /// Raycast cap `d⁺` for corridor samples.
    pub d_plus: f64,
    pub corridor_degree: usize,
    pub n_beams: usize,
    pub scan_range: f64,
    /// Per-trial start jitter: position radius (m) and heading (rad).
    pub jitter_position: f64,
    pub jitter_heading: f64,
    /// Solutions stopped at the iteration limit are used when their
    /// constraint violation is below this; otherwise the robot brakes.
    pub max_iter_violation: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            mpcc: MpccConfig::default(),
            clf: ClfParams::default(),
            cbf: CbfParams::default(),
            sac: SacConfig::default(),
            goal_tolerance: 0.2,
            max_steps: 1200,
            replan_distance: 0.5,
            plan_length: 4.0,
            plan_clearance: 0.15,
            kappa_max: 6.0,
            d_plus: 0.35,
            corridor_degree: 3,
            n_beams: 360,
            scan_range: 5.0,
            jitter_position: 0.05,
            jitter_heading: 0.1,
            max_iter_violation: 1e-3,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.mpcc.validate()?;
        self.clf.validate()?;
        self.cbf.validate(self.mpcc.v_max)?;
        let pos = [
            self.goal_tolerance,
            self.replan_distance,
            self.plan_length,
            self.plan_clearance,
            self.d_plus,
            self.scan_range,
            self.sac.a_max,
        ];
        if pos.iter().any(|v| !(*v > 0.0 && v.is_finite())) || !(self.kappa_max >= 0.0) {
            return Err(Error::InvalidInput("simulation lengths must be positive".into()));
        }
        if self.max_steps == 0 || self.n_beams == 0 {
            return Err(Error::InvalidInput("max_steps and n_beams must be positive".into()));
        }
        if !(self.jitter_position >= 0.0 && self.jitter_heading >= 0.0) {
            return Err(Error::InvalidInput("jitter must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EpisodeConfig<'a> {
    pub world: &'a Costmap,
    pub start: Pose,
    pub goal: Vec2,
    pub variant: Variant,
    /// Seeds the gain policy's sampling.
    pub seed: u64,
    pub sim: &'a SimConfig,
}

/// Source of gain adjustments for the `cbf_sac` variant.
pub trait GainAdapter {
    fn act(&mut self, obs: &SacObservation) -> SacAction;
}

/// Adapter around a policy, sampling from its own seeded stream.
#[derive(Debug, Clone)]
pub struct PolicyAdapter<'a> {
    pub policy: &'a GaussianPolicy,
    pub deterministic: bool,
    rng: ChaCha8Rng,
}

impl<'a> PolicyAdapter<'a> {
    pub fn new(policy: &'a GaussianPolicy, deterministic: bool, seed: u64) -> Self {
        Self {
            policy,
            deterministic,
            rng: seeded(seed),
        }
    }
}

impl GainAdapter for PolicyAdapter<'_> {
    fn act(&mut self, obs: &SacObservation) -> SacAction {
        self.policy.act(obs, self.deterministic, &mut self.rng).action
    }
}

/// One control cycle. State and barrier values are taken after the plant
/// step; the barriers use the corridor the cycle was solved with.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub state: AugmentedState,
    pub input: Input,
    pub h_upper: f64,
    pub h_lower: f64,
    pub alpha_upper: f64,
    pub alpha_lower: f64,
    pub delta: f64,
    pub z: u8,
    pub status: SolveStatus,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub solve_time: f64,
    /// Observation the gains were chosen from, and the chosen change.
    pub obs: SacObservation,
    pub action: SacAction,
    pub replanned: bool,
    /// Absolute lag error at the executed state.
    pub lag_error: f64,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub variant: Variant,
    pub outcome: Outcome,
    pub steps: Vec<StepRecord>,
    /// Observation after the last executed step.
    pub final_obs: Option<SacObservation>,
    /// Last plan and corridor, for plotting.
    pub last_plan: Option<(PlanarCurve, Corridor)>,
    pub wall_time: f64,
}

impl EpisodeResult {
    pub fn all_optimal(&self) -> bool {
        self.steps.iter().all(|s| s.status == SolveStatus::Optimal)
    }

    pub fn min_barrier(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.h_upper.min(s.h_lower))
            .fold(f64::INFINITY, f64::min)
    }

    /// Steps whose smaller barrier value is negative.
    pub fn negative_barrier_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.h_upper.min(s.h_lower) < 0.0).count()
    }

    pub fn mean_solve_ms(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        1e3 * self.steps.iter().map(|s| s.solve_time).sum::<f64>() / self.steps.len() as f64
    }

    pub fn trace_rows(&self) -> Vec<TraceRow> {
        self.steps.iter().map(TraceRow::from).collect()
    }
}

fn observation(
    s: &AugmentedState,
    curve: &PlanarCurve,
    corridor: &Corridor,
    cbf: &CbfParams,
    z: u8,
) -> SacObservation {
    let (hu, hl) = cbf_pair(s, curve, corridor, cbf);
    SacObservation {
        theta: s.theta,
        v: s.v,
        nu: s.nu,
        d_upper: corridor.d_upper(s.xi_hat),
        d_lower: corridor.d_lower(s.xi_hat),
        h_upper: hu,
        h_lower: hl,
        alpha_upper: cbf.alpha_upper,
        alpha_lower: cbf.alpha_lower,
        z_flag: z,
    }
}

/// Plan still usable: every remaining point keeps the clearance the plan
/// was accepted with.
fn plan_valid(map: &Costmap, curve: &PlanarCurve, from: f64, required: f64) -> bool {
    let step = 0.5 * map.resolution();
    let len = curve.total_length();
    let n = ((len - from).max(0.0) / step).ceil() as usize;
    (0..=n).all(|i| {
        let xi = (from + i as f64 * step).min(len);
        map.clearance(curve.evaluate(xi), required + step) >= required - 1e-9
    })
}

/// Corridor on `[ξ̂, s_r]` (the last 0.1 m near the end), asked to contain
/// the current state when the samples allow it.
fn build_corridor(
    cfg: &SimConfig,
    map: &Costmap,
    curve: &PlanarCurve,
    s: &AugmentedState,
) -> Result<Corridor> {
    let s_r = curve.total_length();
    let start = s.xi_hat.min(s_r - 0.1).max(0.0);
    let dxi = sampling_step(map.resolution(), cfg.d_plus, cfg.kappa_max)?;
    let samples = sample_offsets(curve, map, (start, s_r), dxi, cfg.d_plus, cfg.cbf.r_o)?;
    if start != s.xi_hat {
        let corridor = fit_corridor(&samples, cfg.corridor_degree)?;
        return Ok(shrink_to_regular(curve, &corridor));
    }
    // Ask for some clearance at the robot first, then bare containment.
    let d = signed_normal_error(s.position(), s.xi_hat, curve);
    let mut corridor = None;
    for margin in [START_MARGIN, 1e-6] {
        let floor = (d + cfg.cbf.r_o + margin, -d + cfg.cbf.r_o + margin);
        let c = fit_corridor_with_floor(&samples, cfg.corridor_degree, Some(floor))?;
        let met = c.d_upper(start) >= floor.0 - 1e-9 && c.d_lower(start) >= floor.1 - 1e-9;
        corridor = Some(c);
        if met {
            break;
        }
    }
    Ok(shrink_to_regular(curve, &corridor.unwrap()))
}

/// Run one episode. `adapter` supplies the gain changes for `cbf_sac`.
pub fn run_episode(cfg: &EpisodeConfig, mut adapter: Option<&mut dyn GainAdapter>) -> Result<EpisodeResult> {
    let sim = cfg.sim;
    sim.validate()?;
    if cfg.variant == Variant::CbfSac && adapter.is_none() {
        return Err(Error::InvalidInput("the cbf_sac variant needs a gain policy".into()));
    }
    let started = Instant::now();
    let truth = cfg.world;
    let r_o = sim.cbf.r_o;
    let bounds = sim.cbf.alpha_bounds;
    let mut belief = Costmap::unknown_like(truth);
    let mpcc_cfg = MpccConfig {
        use_cbf: cfg.variant.uses_cbf(),
        ..sim.mpcc.clone()
    };
    let mut ctrl = Mpcc::new(mpcc_cfg.clone());
    let mut state = AugmentedState {
        x: cfg.start.x,
        y: cfg.start.y,
        theta: cfg.start.theta,
        ..Default::default()
    };
    let mut gains = (sim.cbf.alpha_upper, sim.cbf.alpha_lower);
    let mut current: Option<(PlanarCurve, f64)> = None;
    let mut last_corridor: Option<Corridor> = None;
    let mut z_prev = 0u8;
    let mut stalled = 0usize;
    let mut steps = Vec::new();
    let mut final_obs = None;

    let finish = |outcome, steps, final_obs, current: Option<(PlanarCurve, f64)>, corridor: Option<Corridor>| {
        Ok(EpisodeResult {
            variant: cfg.variant,
            outcome,
            steps,
            final_obs,
            last_plan: current.zip(corridor).map(|((c, _), k)| (c, k)),
            wall_time: started.elapsed().as_secs_f64(),
        })
    };

    if truth.is_collision(state.position(), r_o) {
        return finish(Outcome::Collision, steps, None, None, None);
    }
    for k in 0..sim.max_steps {
        let pose = Pose::new(state.x, state.y, state.theta);
        let scan = simulate_scan(truth, pose, sim.n_beams, sim.scan_range)?;
        belief.integrate_scan(&scan);
        if (state.position() - cfg.goal).norm() < sim.goal_tolerance {
            return finish(Outcome::Success, steps, final_obs, current, last_corridor);
        }

        let due = match &current {
            None => true,
            Some((curve, required)) => {
                state.xi_hat >= sim.replan_distance
                    || stalled >= STALL_STEPS
                    || !plan_valid(&belief, curve, state.xi_hat, *required)
            }
        };
        let mut replanned = false;
        if due {
            let r_p = sim.plan_clearance;
            match plan(&belief, state.position(), cfg.goal, sim.plan_length, r_p) {
                Ok(curve) => {
                    let required = r_p.min(belief.clearance(state.position(), r_p + 1.0));
                    let s_r = curve.total_length();
                    state.xi_hat = 0.0;
                    // Resynchronise progress with the robot and keep a stop
                    // before the end of the new plan reachable.
                    state.nu = state.nu.min(state.v).min(0.9 * (2.0 * mpcc_cfg.nudot_max * s_r).sqrt());
                    current = Some((curve, required));
                    replanned = true;
                    if stalled >= STALL_STEPS {
                        // A stationary warm start cannot leave a standstill.
                        ctrl.reset();
                    }
                    stalled = 0;
                }
                Err(Error::PlanningFailed(_)) => {
                    return finish(Outcome::PlannerFailure, steps, final_obs, current, last_corridor);
                }
                Err(e) => return Err(e),
            }
        }
        let (curve, _) = current.as_ref().unwrap();
        let s_r = curve.total_length();
        let corridor = build_corridor(sim, &belief, curve, &state)?;

        let cbf_now = CbfParams {
            alpha_upper: gains.0,
            alpha_lower: gains.1,
            ..sim.cbf
        };
        let obs = observation(&state, curve, &corridor, &cbf_now, z_prev);
        let action = match (cfg.variant, adapter.as_deref_mut()) {
            (Variant::CbfSac, Some(a)) => a.act(&obs),
            _ => SacAction::default(),
        };
        gains = apply_action(gains, &action, bounds);
        let cbf_k = CbfParams {
            alpha_upper: gains.0,
            alpha_lower: gains.1,
            ..sim.cbf
        };

        let sol = ctrl.solve(&state, curve, Some(&corridor), &sim.clf, &cbf_k);
        let usable = match sol.status {
            SolveStatus::Optimal => true,
            SolveStatus::MaxIter => sol.constraint_violation <= sim.max_iter_violation,
            SolveStatus::Infeasible => false,
        };
        let (input, z) = if usable {
            (sol.inputs[0], 0)
        } else {
            fallback_control(&state, &mpcc_cfg)
        };
        let (next, _) = step_plant(&state, &input, &mpcc_cfg, s_r);
        let (hu, hl) = cbf_pair(&next, curve, &corridor, &cbf_k);
        let (_, lag) = crate::clf_cbf::contour_lag_errors(next.position(), next.xi_hat, curve);
        steps.push(StepRecord {
            step: k,
            t: (k + 1) as f64 * mpcc_cfg.dt,
            state: next,
            input,
            h_upper: hu,
            h_lower: hl,
            alpha_upper: gains.0,
            alpha_lower: gains.1,
            delta: sol.delta,
            z,
            status: sol.status,
            iterations: sol.iterations,
            kkt_residual: sol.kkt_residual,
            solve_time: sol.solve_time,
            obs,
            action,
            replanned,
            lag_error: lag.abs(),
        });
        state = next;
        z_prev = z;
        if state.v.abs() < STALL_SPEED && state.nu < STALL_SPEED {
            stalled += 1;
        } else {
            stalled = 0;
        }
        final_obs = Some(observation(&state, curve, &corridor, &cbf_k, z));
        last_corridor = Some(corridor);
        if truth.is_collision(state.position(), r_o) {
            return finish(Outcome::Collision, steps, final_obs, current, last_corridor);
        }
    }
    finish(Outcome::Timeout, steps, final_obs, current, last_corridor)
}
