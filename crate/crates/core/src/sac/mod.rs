//! Soft actor-critic adaptation of the barrier gains `(ᾱ, α̲)`.
//!
//! One action per control cycle nudges each gain by at most `a_max`; the
//! applied gains are clamped into `[α⁻, α⁺]` while the reward penalises the
//! unclamped intent.

mod agent;
mod buffer;
pub mod nn;
mod train;

pub use agent::{
    critic_loss_grad, policy_loss_grad, squash_log_correction, GaussianPolicy, LossReport, PolicySample, SacAgent,
    ACTION_DIM, OBS_DIM,
};
pub use buffer::ReplayBuffer;
pub use train::{initial_policy, train, write_curves, TrainingCurves, TrainingReport};

use nalgebra::DVector;

/// `s_k = [θ, v, ν, d̄, d̲, h̄, h̲, ᾱ, α̲, Z]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SacObservation {
    pub theta: f64,
    pub v: f64,
    pub nu: f64,
    pub d_upper: f64,
    pub d_lower: f64,
    pub h_upper: f64,
    pub h_lower: f64,
    pub alpha_upper: f64,
    pub alpha_lower: f64,
    pub z_flag: u8,
}

impl SacObservation {
    pub fn to_array(&self) -> [f64; OBS_DIM] {
        [
            self.theta,
            self.v,
            self.nu,
            self.d_upper,
            self.d_lower,
            self.h_upper,
            self.h_lower,
            self.alpha_upper,
            self.alpha_lower,
            self.z_flag as f64,
        ]
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.to_array())
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite()) && self.z_flag <= 1
    }
}

/// `(Δᾱ, Δα̲)` in 1/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SacAction {
    pub delta_alpha_upper: f64,
    pub delta_alpha_lower: f64,
}

impl SacAction {
    pub fn as_array(&self) -> [f64; ACTION_DIM] {
        [self.delta_alpha_upper, self.delta_alpha_lower]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: SacObservation,
    pub a: SacAction,
    pub r: f64,
    pub s_next: SacObservation,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardWeights {
    pub gamma_nu: f64,
    pub gamma_b: f64,
    pub gamma_h: f64,
    pub gamma_z: f64,
    /// Progress-rate bound `ν⁺` normalising the progress term.
    pub nu_max: f64,
    /// Penalty per gain component outside `[α⁻, α⁺]`.
    pub bound_penalty: f64,
    /// Penalty when either barrier is negative.
    pub barrier_penalty: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            gamma_nu: 1.0,
            gamma_b: 0.5,
            gamma_h: 10.0,
            gamma_z: 5.0,
            nu_max: 2.0,
            bound_penalty: 10.0,
            barrier_penalty: 10.0,
        }
    }
}

/// Gain-deviation penalty `b`: normalised squared distance to the midpoint,
/// plus a fixed penalty per component outside the bounds.
pub fn gain_penalty(alpha: (f64, f64), bounds: (f64, f64), bound_penalty: f64) -> f64 {
    let (lo, hi) = bounds;
    let mid = 0.5 * (lo + hi);
    [alpha.0, alpha.1]
        .iter()
        .map(|&a| {
            let q = ((a - mid) / (hi - lo)).powi(2);
            if a < lo || a > hi {
                q + bound_penalty
            } else {
                q
            }
        })
        .sum()
}

/// `R = −γ_ν(1 − ν/ν⁺) − γ_b·b(α + Δα) − γ_h·c(h) − γ_z·Z`, with `ν`, `h`
/// and `Z` read from the successor observation.
pub fn reward(
    obs: &SacObservation,
    action: &SacAction,
    obs_next: &SacObservation,
    weights: &RewardWeights,
    alpha_bounds: (f64, f64),
) -> f64 {
    let intent = (
        obs.alpha_upper + action.delta_alpha_upper,
        obs.alpha_lower + action.delta_alpha_lower,
    );
    let b = gain_penalty(intent, alpha_bounds, weights.bound_penalty);
    let c = if obs_next.h_upper.min(obs_next.h_lower) < 0.0 {
        weights.barrier_penalty
    } else {
        0.0
    };
    -weights.gamma_nu * (1.0 - obs_next.nu / weights.nu_max)
        - weights.gamma_b * b
        - weights.gamma_h * c
        - weights.gamma_z * obs_next.z_flag as f64
}

/// `α + Δα` clamped componentwise into `bounds`.
pub fn apply_action(alpha: (f64, f64), action: &SacAction, bounds: (f64, f64)) -> (f64, f64) {
    (
        (alpha.0 + action.delta_alpha_upper).clamp(bounds.0, bounds.1),
        (alpha.1 + action.delta_alpha_lower).clamp(bounds.0, bounds.1),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SacConfig {
    pub hidden: usize,
    /// Per-step bound on each gain change.
    pub a_max: f64,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub learning_rate: f64,
    pub initial_temperature: f64,
    /// Entropy target, `−dim(a)` by default.
    pub target_entropy: f64,
    /// Gradient updates per collected transition.
    pub updates_per_step: f64,
    /// Transitions collected before the first update.
    pub warmup: usize,
    pub reward: RewardWeights,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            a_max: 0.02,
            gamma: 0.99,
            tau: 0.005,
            batch_size: 256,
            buffer_capacity: 100_000,
            learning_rate: 3e-4,
            initial_temperature: 0.2,
            target_entropy: -(ACTION_DIM as f64),
            updates_per_step: 1.0,
            warmup: 256,
            reward: RewardWeights::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BOUNDS: (f64, f64) = (0.05, 0.25);

    fn ideal() -> SacObservation {
        SacObservation {
            nu: 2.0,
            h_upper: 0.1,
            h_lower: 0.1,
            alpha_upper: 0.15,
            alpha_lower: 0.15,
            ..Default::default()
        }
    }

    #[test]
    fn reward_examples() {
        let w = RewardWeights::default();
        let a = SacAction::default();
        assert_eq!(reward(&ideal(), &a, &ideal(), &w, BOUNDS), 0.0);
        let slow = SacObservation { nu: 0.0, ..ideal() };
        assert!((reward(&ideal(), &a, &slow, &w, BOUNDS) + 1.0).abs() < 1e-12);
        let top = SacObservation {
            alpha_upper: 0.25,
            ..ideal()
        };
        assert!((reward(&top, &a, &ideal(), &w, BOUNDS) + 0.125).abs() < 1e-12);
    }

    #[test]
    fn reward_penalises_intent_outside_bounds() {
        let w = RewardWeights::default();
        let top = SacObservation {
            alpha_upper: 0.25,
            ..ideal()
        };
        let push = SacAction {
            delta_alpha_upper: 0.02,
            delta_alpha_lower: 0.0,
        };
        let r = reward(&top, &push, &ideal(), &w, BOUNDS);
        let q = ((0.27 - 0.15) / 0.2f64).powi(2);
        assert!((r + 0.5 * (q + 10.0)).abs() < 1e-12);
    }

    #[test]
    fn apply_action_examples() {
        let up = SacAction {
            delta_alpha_upper: 0.1,
            delta_alpha_lower: 0.0,
        };
        assert_eq!(apply_action((0.25, 0.25), &up, BOUNDS), (0.25, 0.25));
        let down = SacAction {
            delta_alpha_upper: -0.1,
            delta_alpha_lower: -0.1,
        };
        let (a, b) = apply_action((0.25, 0.25), &down, BOUNDS);
        assert!((a - 0.15).abs() < 1e-15 && (b - 0.15).abs() < 1e-15);
    }
}
