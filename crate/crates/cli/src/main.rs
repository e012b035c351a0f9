//! `safenav` command-line driver.
//!
//! Exit status: 0 on success, 1 on a usage error (bad flags or values),
//! 2 when the command fails at runtime (missing files, solver or training
//! failures).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use safenav::config::Config;
use safenav::rng::derive_seed;
use safenav::sac::{initial_policy, train, write_curves, GaussianPolicy};
use safenav::sim::{
    benchmark_episodes, parse_trace, run_episode, summarize, write_summary, write_svg, write_trace, EpisodeConfig,
    GainAdapter, Outcome, PlotData, PolicyAdapter, Variant,
};
use safenav::world::{default_goal, default_start, generate_world_with, load_world, parse_world, save_world, Costmap, Pose};

/// World used by `run` when no `--world` is given: 10 m × 4 m, no obstacles.
const EMPTY_WORLD: &str = include_str!("../worlds/empty.world");

#[derive(Parser, Debug)]
#[command(name = "safenav", version, about = "Corridor-constrained contour control with adaptive barrier gains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct ConfigArgs {
    /// Configuration file of `key = value` lines (see `safenav config`).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable, applied after --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate random obstacle worlds.
    GenWorlds {
        /// Number of worlds.
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Obstacles per square metre.
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        /// World size in metres, as WIDTHxHEIGHT.
        #[arg(long, default_value = "8x4", value_parser = parse_extent)]
        extent: (f64, f64),
        /// Master seed; world i uses a seed derived from it and i.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory (created if missing).
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run one episode and write its trace and plot.
    Run {
        /// World file; the bundled empty world when omitted.
        #[arg(long, value_name = "FILE")]
        world: Option<PathBuf>,
        /// Controller variant: base, cbf_fixed or cbf_sac.
        #[arg(long, default_value = "cbf_fixed", value_parser = parse_variant)]
        variant: Variant,
        /// Gain policy checkpoint for cbf_sac; a seeded random policy when omitted.
        #[arg(long, value_name = "FILE")]
        policy: Option<PathBuf>,
        /// Seed for the gain policy.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trace CSV output.
        #[arg(long, value_name = "FILE")]
        trace: Option<PathBuf>,
        /// SVG plot output.
        #[arg(long, value_name = "FILE")]
        plot: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train a gain policy offline.
    Train {
        /// Directory of `.world` files to train on (round-robin).
        #[arg(long, value_name = "DIR")]
        worlds: PathBuf,
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Policy checkpoint output.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Learning-curve CSV output.
        #[arg(long, value_name = "FILE")]
        curves: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Benchmark variants over a set of worlds.
    Eval {
        /// Directory of `.world` files.
        #[arg(long, value_name = "DIR")]
        worlds: PathBuf,
        /// Trials per world.
        #[arg(long, default_value_t = 5)]
        trials: usize,
        /// Comma-separated variants.
        #[arg(long, value_delimiter = ',', default_value = "base,cbf_fixed,cbf_sac", value_parser = parse_variant)]
        variants: Vec<Variant>,
        /// Gain policy checkpoint for cbf_sac; a seeded random policy when omitted.
        #[arg(long, value_name = "FILE")]
        policy: Option<PathBuf>,
        /// Master seed for start jitter and policy sampling.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Summary CSV output.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Also write every episode's trace CSV into this directory.
        #[arg(long, value_name = "DIR")]
        trace_dir: Option<PathBuf>,
        /// Parallel episodes.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        jobs: u64,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Render a trace CSV as an SVG.
    Plot {
        #[arg(long, value_name = "FILE")]
        trace: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// World file drawn underneath the path.
        #[arg(long, value_name = "FILE")]
        world: Option<PathBuf>,
    },
    /// Print the effective configuration (defaults, file and overrides).
    Config {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn parse_extent(s: &str) -> std::result::Result<(f64, f64), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let w: f64 = w.trim().parse().map_err(|e| format!("bad width: {e}"))?;
    let h: f64 = h.trim().parse().map_err(|e| format!("bad height: {e}"))?;
    if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
        return Err("extent must be positive".into());
    }
    Ok((w, h))
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: safenav::Error| e.to_string())
}

/// Failure category, mapped to the exit status.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn load_config(args: &ConfigArgs) -> std::result::Result<Config, Failure> {
    let mut cfg = Config::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        cfg.merge_str(&text)
            .with_context(|| format!("in config {}", path.display()))
            .map_err(usage)?;
    }
    for item in &args.set {
        cfg.apply_override(item).map_err(usage)?;
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn read_world(path: &Path) -> Result<Costmap> {
    load_world(path).with_context(|| format!("loading world {}", path.display()))
}

/// `.world` files in `dir`, sorted by name, keyed by file stem.
fn read_world_dir(dir: &Path) -> Result<Vec<(String, Costmap)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading world directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "world"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .world files in {}", dir.display());
    }
    paths
        .iter()
        .map(|p| {
            let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok((name, read_world(p)?))
        })
        .collect()
}

fn read_policy(path: Option<&Path>, cfg: &Config, seed: u64) -> Result<GaussianPolicy> {
    match path {
        Some(p) => GaussianPolicy::load(p, cfg.sim.sac.hidden).with_context(|| format!("loading policy {}", p.display())),
        None => Ok(initial_policy(&cfg.sim.sac, seed)),
    }
}

fn execute(command: Command) -> std::result::Result<(), Failure> {
    match command {
        Command::GenWorlds {
            count,
            density,
            extent,
            seed,
            out,
            config,
        } => {
            let cfg = load_config(&config)?;
            if !(density >= 0.0) {
                return Err(usage(anyhow::anyhow!("density must be nonnegative")));
            }
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for i in 0..count {
                let map = generate_world_with(&cfg.world, derive_seed(seed, &[i as u64]), density, extent)
                    .with_context(|| format!("generating world {i}"))?;
                let path = out.join(format!("world_{i:03}.world"));
                save_world(&map, &path).with_context(|| format!("writing {}", path.display()))?;
            }
            println!("wrote {count} worlds to {}", out.display());
        }
        Command::Run {
            world,
            variant,
            policy,
            seed,
            trace,
            plot,
            config,
        } => {
            let cfg = load_config(&config)?;
            let map = match &world {
                Some(p) => read_world(p)?,
                None => parse_world(EMPTY_WORLD)?,
            };
            let start = default_start(&map);
            let goal = default_goal(&map);
            let d = goal - start;
            let episode = EpisodeConfig {
                world: &map,
                start: Pose::new(start.x, start.y, d.y.atan2(d.x)),
                goal,
                variant,
                seed,
                sim: &cfg.sim,
            };
            let pol = match variant {
                Variant::CbfSac => Some(read_policy(policy.as_deref(), &cfg, seed)?),
                _ => None,
            };
            let mut adapter = pol.as_ref().map(|p| PolicyAdapter::new(p, true, seed));
            let res = run_episode(&episode, adapter.as_mut().map(|a| a as &mut dyn GainAdapter))?;
            let rows = res.trace_rows();
            if let Some(path) = &trace {
                write_trace(&rows, path).with_context(|| format!("writing {}", path.display()))?;
            }
            if let Some(path) = &plot {
                let data = PlotData {
                    rows: &rows,
                    map: Some(&map),
                    plan: res.last_plan.as_ref().map(|(c, k)| (c, k)),
                };
                write_svg(&data, path).with_context(|| format!("writing {}", path.display()))?;
            }
            println!(
                "{} {}: {} after {} steps ({:.2} ms mean solve)",
                variant,
                world.as_deref().map_or("empty".into(), |p| p.display().to_string()),
                res.outcome.as_str(),
                res.steps.len(),
                res.mean_solve_ms()
            );
        }
        Command::Train {
            worlds,
            episodes,
            seed,
            out,
            curves,
            config,
        } => {
            let cfg = load_config(&config)?;
            let set = read_world_dir(&worlds)?;
            let report = train(&set, episodes, &cfg.sim, seed)?;
            report.policy.save(&out).with_context(|| format!("writing {}", out.display()))?;
            if let Some(path) = &curves {
                write_curves(&report.curves, path).with_context(|| format!("writing {}", path.display()))?;
            }
            if let Some(msg) = report.diverged {
                return Err(anyhow::anyhow!("training diverged ({msg}); last finite policy saved to {}", out.display()).into());
            }
            let successes = report.curves.rows.iter().filter(|r| r.outcome == Outcome::Success).count();
            println!(
                "trained {episodes} episodes ({successes} successful), beta = {:.4}; policy saved to {}",
                report.agent.beta(),
                out.display()
            );
        }
        Command::Eval {
            worlds,
            trials,
            variants,
            policy,
            seed,
            out,
            trace_dir,
            jobs,
            config,
        } => {
            let cfg = load_config(&config)?;
            if variants.is_empty() {
                return Err(usage(anyhow::anyhow!("no variants given")));
            }
            let set = read_world_dir(&worlds)?;
            let pol = if variants.contains(&Variant::CbfSac) {
                Some(read_policy(policy.as_deref(), &cfg, seed)?)
            } else {
                None
            };
            let runs = benchmark_episodes(&set, trials, &variants, &cfg.sim, seed, pol.as_ref(), jobs as usize)?;
            if let Some(dir) = &trace_dir {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                for (row, res) in &runs {
                    let path = dir.join(format!("{}_{}_{}.csv", row.variant, row.world, row.trial));
                    write_trace(&res.trace_rows(), &path).with_context(|| format!("writing {}", path.display()))?;
                }
            }
            let rows: Vec<_> = runs.into_iter().map(|(row, _)| row).collect();
            write_summary(&rows, &out).with_context(|| format!("writing {}", out.display()))?;
            for s in summarize(&rows) {
                println!(
                    "{}: {}/{} success ({:.1}%), {} collision, {} planner failure, {} timeout",
                    s.variant,
                    s.successes,
                    s.trials,
                    100.0 * s.success_rate(),
                    s.collisions,
                    s.planner_failures,
                    s.timeouts
                );
            }
        }
        Command::Plot { trace, out, world } => {
            let text = fs::read_to_string(&trace).with_context(|| format!("reading trace {}", trace.display()))?;
            let rows = parse_trace(&text).with_context(|| format!("parsing trace {}", trace.display()))?;
            let map = world.as_deref().map(read_world).transpose()?;
            let data = PlotData {
                rows: &rows,
                map: map.as_ref(),
                plan: None,
            };
            write_svg(&data, &out).with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Config { config } => {
            print!("{}", load_config(&config)?.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
