//! Batches of episodes over worlds, trials and variants.
//!
//! Trial `j` on world `i` starts from the world's default start, jittered by
//! a stream seeded with `derive_seed(master, [i, j])`; every variant sees the
//! same start. The gain policy of episode `(variant v, i, j)` samples from
//! `derive_seed(master, [i, j, v + 1])`. Results are returned in
//! variant-major order independent of scheduling.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use super::{run_episode, EpisodeConfig, EpisodeResult, Outcome, PolicyAdapter, SimConfig, Variant};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};
use crate::sac::GaussianPolicy;
use crate::world::{default_goal, default_start, Costmap, Pose};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub variant: Variant,
    pub world: String,
    pub trial: usize,
    pub outcome: Outcome,
    pub steps: usize,
    pub mean_solve_ms: f64,
    pub all_optimal: bool,
    pub min_barrier: f64,
    pub negative_barrier_steps: usize,
}

/// Default start jittered for one trial, heading towards the goal.
pub fn jittered_start(map: &Costmap, master: u64, world: usize, trial: usize, sim: &SimConfig) -> Pose {
    let start = default_start(map);
    let goal = default_goal(map);
    let mut rng = seeded(derive_seed(master, &[world as u64, trial as u64]));
    let r = sim.jitter_position * rng.random::<f64>().sqrt();
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let dtheta = rng.random_range(-1.0..=1.0) * sim.jitter_heading;
    let d = goal - start;
    Pose::new(
        start.x + r * phi.cos(),
        start.y + r * phi.sin(),
        d.y.atan2(d.x) + dtheta,
    )
}

/// Run every `(variant, world, trial)` combination on `jobs` threads.
pub fn benchmark(
    worlds: &[(String, Costmap)],
    trials: usize,
    variants: &[Variant],
    sim: &SimConfig,
    master_seed: u64,
    policy: Option<&GaussianPolicy>,
    jobs: usize,
) -> Result<Vec<BenchmarkRow>> {
    let runs = benchmark_episodes(worlds, trials, variants, sim, master_seed, policy, jobs)?;
    Ok(runs.into_iter().map(|(row, _)| row).collect())
}

/// As [`benchmark`], also returning each episode's full result.
pub fn benchmark_episodes(
    worlds: &[(String, Costmap)],
    trials: usize,
    variants: &[Variant],
    sim: &SimConfig,
    master_seed: u64,
    policy: Option<&GaussianPolicy>,
    jobs: usize,
) -> Result<Vec<(BenchmarkRow, EpisodeResult)>> {
    if variants.contains(&Variant::CbfSac) && policy.is_none() {
        return Err(Error::InvalidInput("the cbf_sac variant needs a policy".into()));
    }
    let tasks: Vec<(Variant, usize, usize)> = variants
        .iter()
        .flat_map(|&v| (0..worlds.len()).flat_map(move |w| (0..trials).map(move |t| (v, w, t))))
        .collect();
    let run = |&(variant, w, trial): &(Variant, usize, usize)| -> Result<(BenchmarkRow, EpisodeResult)> {
        let (name, map) = &worlds[w];
        let vi = Variant::ALL.iter().position(|&x| x == variant).unwrap() as u64;
        let seed = derive_seed(master_seed, &[w as u64, trial as u64, vi + 1]);
        let cfg = EpisodeConfig {
            world: map,
            start: jittered_start(map, master_seed, w, trial, sim),
            goal: default_goal(map),
            variant,
            seed,
            sim,
        };
        let mut adapter = policy.map(|p| PolicyAdapter::new(p, true, seed));
        let res = run_episode(&cfg, adapter.as_mut().map(|a| a as &mut dyn super::GainAdapter))?;
        let row = BenchmarkRow {
            variant,
            world: name.clone(),
            trial,
            outcome: res.outcome,
            steps: res.steps.len(),
            mean_solve_ms: res.mean_solve_ms(),
            all_optimal: res.all_optimal(),
            min_barrier: res.min_barrier(),
            negative_barrier_steps: res.negative_barrier_steps(),
        };
        Ok((row, res))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    pool.install(|| tasks.par_iter().map(run).collect())
}

pub fn summary_csv(rows: &[BenchmarkRow]) -> String {
    let mut out = String::from("variant,world,trial,outcome,steps,mean_solve_ms\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.3}",
            r.variant,
            r.world,
            r.trial,
            r.outcome.as_str(),
            r.steps,
            r.mean_solve_ms
        );
    }
    out
}

pub fn write_summary(rows: &[BenchmarkRow], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, summary_csv(rows))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantSummary {
    pub variant: Variant,
    pub trials: usize,
    pub successes: usize,
    pub collisions: usize,
    pub planner_failures: usize,
    pub timeouts: usize,
}

impl VariantSummary {
    pub fn success_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }
}

/// Outcome counts per variant, in order of first appearance.
pub fn summarize(rows: &[BenchmarkRow]) -> Vec<VariantSummary> {
    let mut out: Vec<VariantSummary> = Vec::new();
    for r in rows {
        let idx = match out.iter().position(|s| s.variant == r.variant) {
            Some(i) => i,
            None => {
                out.push(VariantSummary {
                    variant: r.variant,
                    trials: 0,
                    successes: 0,
                    collisions: 0,
                    planner_failures: 0,
                    timeouts: 0,
                });
                out.len() - 1
            }
        };
        let s = &mut out[idx];
        s.trials += 1;
        match r.outcome {
            Outcome::Success => s.successes += 1,
            Outcome::Collision => s.collisions += 1,
            Outcome::PlannerFailure => s.planner_failures += 1,
            Outcome::Timeout => s.timeouts += 1,
        }
    }
    out
}
