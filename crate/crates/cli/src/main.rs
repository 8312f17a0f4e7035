//! `canopy`: batch pipeline from procedural forest to planned paths and
//! evaluation reports. All randomness derives from the config's root seed.

mod artifacts;
mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::artifacts::Ctx;
use crate::commands::{EvaluateArgs, MapArgs, MissionArgs, Mode, PlanArgs};
use crate::config::{CostKind, RunConfig};
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "canopy", version, about = "Uncertainty-aware aerial mapping and under-canopy path planning")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, default_value = "canopy.toml")]
    config: PathBuf,
    /// Overrides the config's root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact directory, shared by all steps of a pipeline.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Ablation {
    Kld,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a procedural forest (world.json).
    GenWorld,
    /// Fly the lawnmower survey over the world (trajectory.csv, scans.ply).
    Fly,
    /// Build an occupancy grid from a perturbed trajectory estimate.
    Map {
        #[arg(long, value_enum, default_value = "standard")]
        mode: Mode,
        /// Trajectory samples for the UA map.
        #[arg(long)]
        samples: Option<usize>,
        /// Estimate error as a multiple of the base noise.
        #[arg(long)]
        perturb: Option<f64>,
        /// Posterior spread as a multiple of the base noise; defaults to
        /// the perturbation level.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Ground filtering and obstruction scores for a mapped grid.
    Score {
        #[arg(long, value_enum, default_value = "standard")]
        mode: Mode,
        #[arg(long)]
        perturb: Option<f64>,
    },
    /// Plan a path over an obstruction map.
    Plan {
        #[arg(long, value_enum, default_value = "standard")]
        mode: Mode,
        #[arg(long, value_enum)]
        cost: Option<CostKind>,
        /// Obstacle cost for the expected-cost model.
        #[arg(long)]
        cobst: Option<f64>,
        /// Start `x,y` in meters.
        #[arg(long, value_parser = parse_xy)]
        start: Option<[f64; 2]>,
        /// Goal `x,y` in meters.
        #[arg(long, value_parser = parse_xy)]
        goal: Option<[f64; 2]>,
    },
    /// Executed-length study of prior-map planners against the naive planner.
    Mission {
        #[arg(long, value_enum)]
        cost: Option<CostKind>,
        /// Obstacle cost; with `--cost expected` and no value, both 5 and 20
        /// are run.
        #[arg(long)]
        cobst: Option<f64>,
        /// Onboard sensing radius in meters (default 5).
        #[arg(long)]
        local_radius: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Score a mapped grid against ground truth, or run a map ablation.
    Evaluate {
        #[arg(long, value_enum)]
        ablation: Option<Ablation>,
        #[arg(long, value_enum, default_value = "standard")]
        mode: Mode,
        #[arg(long)]
        samples: Option<usize>,
        /// Single noise level for the ablation instead of the configured list.
        #[arg(long)]
        perturb: Option<f64>,
    },
}

fn parse_xy(s: &str) -> Result<[f64; 2], String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let f = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v}: {e}"));
    Ok([f(x)?, f(y)?])
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let ctx = Ctx::new(cfg, cli.out)?;
    match cli.command {
        Command::GenWorld => commands::gen_world(&ctx),
        Command::Fly => commands::fly(&ctx),
        Command::Map { mode, samples, perturb, noise } => {
            commands::map(&ctx, &MapArgs { mode, samples, perturb, noise })
        }
        Command::Score { mode, perturb } => commands::score(&ctx, mode, perturb),
        Command::Plan { mode, cost, cobst, start, goal } => {
            commands::plan(&ctx, &PlanArgs { mode, cost, cobst, start, goal })
        }
        Command::Mission { cost, cobst, local_radius, samples } => {
            commands::mission(&ctx, &MissionArgs { cost, cobst, local_radius, samples })
        }
        Command::Evaluate { ablation, mode, samples, perturb } => {
            commands::evaluate(&ctx, &EvaluateArgs { ablation: ablation.is_some(), mode, samples, perturb })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            let err = CliError::Usage(first);
            eprintln!("{err}");
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
