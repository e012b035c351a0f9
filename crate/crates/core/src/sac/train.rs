//! Offline training: stochastic `cbf_sac` rollouts alternate with batches
//! of gradient updates sized to the number of collected transitions.

use std::fmt::Write as _;
use std::path::Path;

use super::{reward, GaussianPolicy, LossReport, ReplayBuffer, SacAgent, SacConfig, Transition};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::sim::{jittered_start, run_episode, EpisodeConfig, GainAdapter, Outcome, PolicyAdapter, SimConfig, Variant};
use crate::world::{default_goal, Costmap};

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub episode: usize,
    pub world: String,
    pub outcome: Outcome,
    pub steps: usize,
    pub episode_return: f64,
    pub updates: usize,
    /// Means over the episode's updates (NaN when there were none).
    pub critic_loss: f64,
    pub policy_loss: f64,
    pub temperature_loss: f64,
    pub entropy: f64,
    pub beta: f64,
    /// Largest gain change requested during the episode.
    pub max_abs_action: f64,
    /// Applied gain range seen during the episode.
    pub alpha_min: f64,
    pub alpha_max: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingCurves {
    pub rows: Vec<CurveRow>,
}

impl TrainingCurves {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "episode,world,outcome,steps,return,updates,critic_loss,policy_loss,temperature_loss,entropy,beta\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.episode,
                r.world,
                r.outcome.as_str(),
                r.steps,
                r.episode_return,
                r.updates,
                r.critic_loss,
                r.policy_loss,
                r.temperature_loss,
                r.entropy,
                r.beta
            );
        }
        out
    }
}

pub fn write_curves(curves: &TrainingCurves, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, curves.to_csv())?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainingReport {
    /// Final policy, or the last finite one when training diverged.
    pub policy: GaussianPolicy,
    pub agent: SacAgent,
    pub curves: TrainingCurves,
    pub diverged: Option<String>,
}

/// Policy a training run with `seed` starts from.
pub fn initial_policy(cfg: &SacConfig, seed: u64) -> GaussianPolicy {
    SacAgent::new(cfg.clone(), derive_seed(seed, &[0])).policy
}

/// Train on `worlds` round-robin for `episodes` episodes.
///
/// Seeds: agent `derive_seed(seed, [0])`, replay sampling `[1]`, episode
/// `e` rollouts `[2, e]`; starts are jittered as in the benchmark with
/// world index `e mod |worlds|` and trial `e`.
pub fn train(worlds: &[(String, Costmap)], episodes: usize, sim: &SimConfig, seed: u64) -> Result<TrainingReport> {
    if worlds.is_empty() && episodes > 0 {
        return Err(Error::InvalidInput("training needs at least one world".into()));
    }
    sim.validate()?;
    let cfg = &sim.sac;
    let mut agent = SacAgent::new(cfg.clone(), derive_seed(seed, &[0]));
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, derive_seed(seed, &[1]));
    let mut curves = TrainingCurves::default();
    let mut last_finite = agent.policy.clone();
    let bounds = sim.cbf.alpha_bounds;
    let mut credit = 0.0;

    for ep in 0..episodes {
        let w = ep % worlds.len();
        let (name, map) = &worlds[w];
        let ep_seed = derive_seed(seed, &[2, ep as u64]);
        let episode = EpisodeConfig {
            world: map,
            start: jittered_start(map, seed, w, ep, sim),
            goal: default_goal(map),
            variant: Variant::CbfSac,
            seed: ep_seed,
            sim,
        };
        let policy = agent.policy.clone();
        let mut adapter = PolicyAdapter::new(&policy, false, ep_seed);
        let res = run_episode(&episode, Some(&mut adapter as &mut dyn GainAdapter))?;

        let n = res.steps.len();
        let terminal = res.outcome != Outcome::Timeout;
        let mut ret = 0.0;
        let (mut max_abs_action, mut alpha_min, mut alpha_max) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..n {
            let s = res.steps[k].obs;
            let s_next = if k + 1 < n {
                res.steps[k + 1].obs
            } else {
                res.final_obs.unwrap_or(s)
            };
            let a = res.steps[k].action;
            let r = reward(&s, &a, &s_next, &cfg.reward, bounds);
            ret += r;
            max_abs_action = max_abs_action.max(a.delta_alpha_upper.abs()).max(a.delta_alpha_lower.abs());
            for g in [res.steps[k].alpha_upper, res.steps[k].alpha_lower] {
                alpha_min = alpha_min.min(g);
                alpha_max = alpha_max.max(g);
            }
            buffer.push(Transition {
                s,
                a,
                r,
                s_next,
                done: terminal && k + 1 == n,
            });
        }

        let mut reports: Vec<LossReport> = Vec::new();
        let mut diverged = None;
        if buffer.len() >= cfg.warmup.max(1) {
            credit += cfg.updates_per_step * n as f64;
            while credit >= 1.0 {
                credit -= 1.0;
                let batch = buffer.sample(cfg.batch_size);
                let rep = agent.update(&batch);
                if !rep.is_finite() || !agent.is_finite() {
                    diverged = Some(format!("non-finite loss in episode {ep}: {rep:?}"));
                    break;
                }
                reports.push(rep);
            }
        }
        let mean = |f: fn(&LossReport) -> f64| {
            if reports.is_empty() {
                f64::NAN
            } else {
                reports.iter().map(f).sum::<f64>() / reports.len() as f64
            }
        };
        curves.rows.push(CurveRow {
            episode: ep,
            world: name.clone(),
            outcome: res.outcome,
            steps: n,
            episode_return: ret,
            updates: reports.len(),
            critic_loss: mean(|r| 0.5 * (r.critic1 + r.critic2)),
            policy_loss: mean(|r| r.policy),
            temperature_loss: mean(|r| r.temperature),
            entropy: mean(|r| r.entropy),
            beta: agent.beta(),
            max_abs_action,
            alpha_min,
            alpha_max,
        });
        if let Some(msg) = diverged {
            return Ok(TrainingReport {
                policy: last_finite,
                agent,
                curves,
                diverged: Some(msg),
            });
        }
        last_finite = agent.policy.clone();
    }
    Ok(TrainingReport {
        policy: agent.policy.clone(),
        agent,
        curves,
        diverged: None,
    })
}
