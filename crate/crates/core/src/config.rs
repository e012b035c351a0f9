//! Flat `key = value` configuration files.
//!
//! Every tunable default of the stack has one key, prefixed by the module it
//! belongs to (`mpcc_`, `clf_`, `cbf_`, `sac_`, `reward_`, `sim_`, `world_`).
//! Files use TOML scalar syntax without tables; `#` starts a comment.
//! Unknown keys and type mismatches are errors. Keys missing from a file keep
//! their defaults, and command-line overrides (`key=value`) are applied after
//! the file.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::SimConfig;
use crate::world::WorldGenConfig;

/// Everything a command can be configured with.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    pub sim: SimConfig,
    pub world: WorldGenConfig,
}

#[derive(Clone, Copy)]
enum Kind {
    Float,
    Int,
    Bool,
}

enum Scalar {
    Float(f64),
    Int(i64),
    Bool(bool),
}

macro_rules! keys {
    ($($key:literal : $kind:ident => [$($path:tt)+]),* $(,)?) => {
        const KEYS: &[(&str, Kind)] = &[$(($key, Kind::$kind)),*];

        fn set_value(cfg: &mut Config, key: &str, v: Scalar) -> Result<()> {
            match key {
                $($key => keys!(@set cfg, $kind, v, $key, $($path)+),)*
                _ => return Err(unknown(key)),
            }
            Ok(())
        }

        fn get_value(cfg: &Config, key: &str) -> String {
            match key {
                $($key => keys!(@get cfg, $kind, $($path)+),)*
                _ => unreachable!(),
            }
        }
    };
    (@set $cfg:ident, Float, $v:ident, $key:literal, $($path:tt)+) => {
        $cfg.$($path)+ = match $v {
            Scalar::Float(x) => x,
            Scalar::Int(i) => i as f64,
            Scalar::Bool(_) => return Err(mismatch($key, "a number")),
        }
    };
    (@set $cfg:ident, Int, $v:ident, $key:literal, $($path:tt)+) => {
        $cfg.$($path)+ = match $v {
            Scalar::Int(i) if i >= 0 => i.try_into().map_err(|_| mismatch($key, "a non-negative integer"))?,
            _ => return Err(mismatch($key, "a non-negative integer")),
        }
    };
    (@set $cfg:ident, Bool, $v:ident, $key:literal, $($path:tt)+) => {
        $cfg.$($path)+ = match $v {
            Scalar::Bool(b) => b,
            _ => return Err(mismatch($key, "true or false")),
        }
    };
    (@get $cfg:ident, Float, $($path:tt)+) => { float_literal($cfg.$($path)+) };
    (@get $cfg:ident, Int, $($path:tt)+) => { $cfg.$($path)+.to_string() };
    (@get $cfg:ident, Bool, $($path:tt)+) => { $cfg.$($path)+.to_string() };
}

keys! {
    "mpcc_horizon": Int => [sim.mpcc.horizon],
    "mpcc_dt": Float => [sim.mpcc.dt],
    "mpcc_q_c": Float => [sim.mpcc.q_c],
    "mpcc_q_l": Float => [sim.mpcc.q_l],
    "mpcc_q_nu": Float => [sim.mpcc.q_nu],
    "mpcc_q_xi": Float => [sim.mpcc.q_xi],
    "mpcc_slack_weight": Float => [sim.mpcc.slack_weight],
    "mpcc_input_weight_a": Float => [sim.mpcc.input_weight[0]],
    "mpcc_input_weight_omega": Float => [sim.mpcc.input_weight[1]],
    "mpcc_input_weight_nudot": Float => [sim.mpcc.input_weight[2]],
    "mpcc_nu_max": Float => [sim.mpcc.nu_max],
    "mpcc_nudot_max": Float => [sim.mpcc.nudot_max],
    "mpcc_a_max": Float => [sim.mpcc.a_max],
    "mpcc_omega_max": Float => [sim.mpcc.omega_max],
    "mpcc_v_min": Float => [sim.mpcc.v_min],
    "mpcc_v_max": Float => [sim.mpcc.v_max],
    "mpcc_sqp_iters": Int => [sim.mpcc.sqp_iters],
    "mpcc_qp_tol": Float => [sim.mpcc.qp_tol],
    "mpcc_use_clf": Bool => [sim.mpcc.use_clf],
    "clf_lambda_c": Float => [sim.clf.lambda_c],
    "clf_lambda_l": Float => [sim.clf.lambda_l],
    "clf_psi": Float => [sim.clf.psi],
    "cbf_alpha0_upper": Float => [sim.cbf.alpha_upper],
    "cbf_alpha0_lower": Float => [sim.cbf.alpha_lower],
    "cbf_alpha_min": Float => [sim.cbf.alpha_bounds.0],
    "cbf_alpha_max": Float => [sim.cbf.alpha_bounds.1],
    "cbf_lambda": Float => [sim.cbf.lambda],
    "cbf_r_o": Float => [sim.cbf.r_o],
    "sac_hidden": Int => [sim.sac.hidden],
    "sac_a_max": Float => [sim.sac.a_max],
    "sac_gamma": Float => [sim.sac.gamma],
    "sac_tau": Float => [sim.sac.tau],
    "sac_batch_size": Int => [sim.sac.batch_size],
    "sac_buffer_capacity": Int => [sim.sac.buffer_capacity],
    "sac_learning_rate": Float => [sim.sac.learning_rate],
    "sac_initial_temperature": Float => [sim.sac.initial_temperature],
    "sac_target_entropy": Float => [sim.sac.target_entropy],
    "sac_updates_per_step": Float => [sim.sac.updates_per_step],
    "sac_warmup": Int => [sim.sac.warmup],
    "reward_gamma_nu": Float => [sim.sac.reward.gamma_nu],
    "reward_gamma_b": Float => [sim.sac.reward.gamma_b],
    "reward_gamma_h": Float => [sim.sac.reward.gamma_h],
    "reward_gamma_z": Float => [sim.sac.reward.gamma_z],
    "reward_nu_max": Float => [sim.sac.reward.nu_max],
    "reward_bound_penalty": Float => [sim.sac.reward.bound_penalty],
    "reward_barrier_penalty": Float => [sim.sac.reward.barrier_penalty],
    "sim_goal_tolerance": Float => [sim.goal_tolerance],
    "sim_max_steps": Int => [sim.max_steps],
    "sim_replan_distance": Float => [sim.replan_distance],
    "sim_plan_length": Float => [sim.plan_length],
    "sim_plan_clearance": Float => [sim.plan_clearance],
    "sim_kappa_max": Float => [sim.kappa_max],
    "sim_d_plus": Float => [sim.d_plus],
    "sim_corridor_degree": Int => [sim.corridor_degree],
    "sim_n_beams": Int => [sim.n_beams],
    "sim_scan_range": Float => [sim.scan_range],
    "sim_jitter_position": Float => [sim.jitter_position],
    "sim_jitter_heading": Float => [sim.jitter_heading],
    "sim_max_iter_violation": Float => [sim.max_iter_violation],
    "world_resolution": Float => [world.resolution],
    "world_robot_radius": Float => [world.robot_radius],
    "world_size_min": Float => [world.size_range.0],
    "world_size_max": Float => [world.size_range.1],
    "world_gap": Float => [world.gap],
    "world_max_regenerations": Int => [world.max_regenerations],
}

fn unknown(key: &str) -> Error {
    Error::InvalidInput(format!("unknown configuration key {key:?}"))
}

fn mismatch(key: &str, want: &str) -> Error {
    Error::InvalidInput(format!("configuration key {key:?} expects {want}"))
}

/// Shortest round-trip text that TOML reads back as a float.
fn float_literal(x: f64) -> String {
    let s = format!("{x:?}");
    if s.contains(['.', 'e', 'E']) || !x.is_finite() {
        s
    } else {
        format!("{s}.0")
    }
}

/// All recognised keys, in file order.
pub fn keys() -> impl Iterator<Item = &'static str> {
    KEYS.iter().map(|(k, _)| *k)
}

fn scalar(key: &str, v: &toml::Value) -> Result<Scalar> {
    match v {
        toml::Value::Float(x) => Ok(Scalar::Float(*x)),
        toml::Value::Integer(i) => Ok(Scalar::Int(*i)),
        toml::Value::Boolean(b) => Ok(Scalar::Bool(*b)),
        _ => Err(Error::InvalidInput(format!(
            "configuration key {key:?} must be a number or boolean"
        ))),
    }
}

impl Config {
    /// Apply the assignments in `text` on top of `self`.
    pub fn merge_str(&mut self, text: &str) -> Result<()> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse {
                line,
                msg: e.message().to_string(),
            }
        })?;
        for (key, value) in &table {
            if !KEYS.iter().any(|(k, _)| k == key) {
                return Err(unknown(key));
            }
            set_value(self, key, scalar(key, value)?)?;
        }
        Ok(())
    }

    /// Apply a single `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("override {assignment:?} is not key=value")))?;
        self.merge_str(&format!("{} = {}", key.trim(), value.trim()))
    }

    /// Defaults overlaid with `text`, then validated.
    pub fn from_str_validated(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.merge_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_str_validated(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.world.validate()
    }

    /// Every key with its current value, one per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, _) in KEYS {
            let _ = writeln!(out, "{key} = {}", get_value(self, key));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}
