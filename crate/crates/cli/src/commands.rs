//! One function per subcommand. Each reads earlier artifacts from the output
//! directory and writes its own.

use std::path::PathBuf;

use canopy::evaluation::{score_map, write_map_report_rows, write_summary, MapReport, MAP_REPORT_HEADER};
use canopy::experiment::{build_scenario, cost_label, run_map_ablation, run_mission_study, write_ablation_csv};
use canopy::geom_io::{world_points, write_trajectory, ScanSet, Trajectory};
use canopy::ground_filter::{segment_ground_on, write_ground_csv, write_ground_pgm};
use canopy::obstruction::{
    build_obstruction_map, read_obstruction_csv, write_obstruction_csv, write_obstruction_png, ObstructionMap, ScoreMode,
};
use canopy::occupancy::{
    build_standard_map, build_ua_map, read_grid, sample_trajectory, write_grid, GridSpec, OccupancyGrid, PosteriorModel,
    TrajectoryPosterior,
};
use canopy::planner::{self, path_reachability, write_path_csv, Cell, CostModel};
use canopy::rng::derive_seed;
use canopy::simulation::{
    add_range_noise, generate_forest, grid_spec_for, layout_for, simulate_flight, write_ledger, World,
};

use crate::artifacts::{Ctx, WorldArtifact, SCANS, TRAJECTORY, WORLD};
use crate::config::CostKind;
use crate::error::CliError;

/// Sub-streams of the root seed. World and flight match
/// [`build_scenario`], so CLI and library runs see the same forest.
mod stream {
    pub const WORLD: u64 = 1;
    pub const FLIGHT: u64 = 2;
    pub const ESTIMATE: u64 = 3;
    pub const RANGE: u64 = 4;
    pub const UA: u64 = 5;
    pub const ABLATION: u64 = 100;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Standard,
    Ua,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Standard => "standard",
            Mode::Ua => "ua",
        }
    }

    fn grid_file(self) -> String {
        format!("grid_{}.uaog", self.name())
    }

    fn obstruction_file(self) -> String {
        format!("obstruction_{}.csv", self.name())
    }
}

pub fn gen_world(ctx: &Ctx) -> Result<Vec<PathBuf>, CliError> {
    let world = generate_forest(&ctx.cfg.world, derive_seed(ctx.seed(), stream::WORLD))?;
    let obstacles = world.obstacles.len();
    let artifact = WorldArtifact { config_hash: ctx.hash.clone(), seed: ctx.seed(), world };
    let json = serde_json::to_vec_pretty(&artifact).map_err(|e| CliError::Run(e.to_string()))?;
    let p = ctx.write_bytes(WORLD, &json)?;
    eprintln!("world: {obstacles} primitives");
    Ok(vec![p])
}

pub fn fly(ctx: &Ctx) -> Result<Vec<PathBuf>, CliError> {
    let world = ctx.load_world()?;
    let spec = ctx.cfg.survey.flight_for(&world);
    let flight = simulate_flight(&world, &spec, derive_seed(ctx.seed(), stream::FLIGHT))?;
    let t = ctx.write_text(TRAJECTORY, "fly", &[], |w| write_trajectory(w, &flight.trajectory))?;
    let s = ctx.write_scans(SCANS, "fly", &flight.ideal)?;
    eprintln!("flight: {} poses, {} rays", flight.trajectory.len(), flight.ideal.ray_count());
    Ok(vec![t, s])
}

/// Trajectory estimate and range-noisy scans. Independent of the mapping
/// mode, so standard and UA maps share one estimate.
struct Estimate {
    trajectory: Trajectory,
    scans: ScanSet,
}

fn estimate(ctx: &Ctx, truth: &Trajectory, ideal: &ScanSet, perturb: f64) -> Result<Estimate, CliError> {
    let model = PosteriorModel::GpsIndependent(ctx.cfg.noise.scaled(perturb));
    let posterior = TrajectoryPosterior::new(truth.clone(), model)?;
    let trajectory = sample_trajectory(&posterior, derive_seed(ctx.seed(), stream::ESTIMATE));
    let scans = add_range_noise(ideal, ctx.cfg.survey.range_sigma, derive_seed(ctx.seed(), stream::RANGE))?;
    Ok(Estimate { trajectory, scans })
}

fn grid_spec(ctx: &Ctx, world: &World) -> Result<GridSpec, CliError> {
    Ok(grid_spec_for(world, ctx.cfg.voxel_size)?)
}

pub struct MapArgs {
    pub mode: Mode,
    pub samples: Option<usize>,
    pub perturb: Option<f64>,
    pub noise: Option<f64>,
}

pub fn map(ctx: &Ctx, args: &MapArgs) -> Result<Vec<PathBuf>, CliError> {
    let world = ctx.load_world()?;
    let (truth, ideal) = ctx.load_flight()?;
    let perturb = args.perturb.unwrap_or(ctx.cfg.perturb);
    let noise = args.noise.unwrap_or(perturb);
    let samples = args.samples.unwrap_or(ctx.cfg.samples);
    if samples == 0 || !(perturb >= 0.0) || !(noise >= 0.0) {
        return Err(CliError::Usage("--samples must be >= 1; --perturb and --noise must be >= 0".into()));
    }
    let spec = grid_spec(ctx, &world)?;
    let est = estimate(ctx, &truth, &ideal, perturb)?;
    let grid: OccupancyGrid<f64> = match args.mode {
        Mode::Standard => build_standard_map(&est.scans, &est.trajectory, &ctx.cfg.sensor, &spec),
        Mode::Ua => {
            let model = PosteriorModel::GpsIndependent(ctx.cfg.noise.scaled(noise));
            let posterior = TrajectoryPosterior::new(est.trajectory.clone(), model)?;
            build_ua_map(&est.scans, &posterior, samples, &ctx.cfg.sensor, &spec, derive_seed(ctx.seed(), stream::UA))?
        }
    };
    // Mode-specific knobs stay out of the trailer so equal grids compare
    // byte for byte across modes.
    let extra = [("perturb", perturb.to_string())];
    let g = ctx.write_binary(&args.mode.grid_file(), "map", &extra, |w| write_grid(w, &grid))?;
    let e = ctx.write_text("estimate_trajectory.csv", "map", &extra, |w| write_trajectory(w, &est.trajectory))?;
    eprintln!("map: {} observed voxels of {}", grid.observed_count(), spec.len());
    Ok(vec![g, e])
}

fn load_grid(ctx: &Ctx, mode: Mode) -> Result<OccupancyGrid<f64>, CliError> {
    let p = ctx.require(&mode.grid_file(), &format!("map --mode {}", mode.name()))?;
    let bytes = std::fs::read(&p)?;
    read_grid(bytes.as_slice()).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
}

pub fn score(ctx: &Ctx, mode: Mode, perturb: Option<f64>) -> Result<Vec<PathBuf>, CliError> {
    let (truth, ideal) = ctx.load_flight()?;
    let grid = load_grid(ctx, mode)?;
    let est = estimate(ctx, &truth, &ideal, perturb.unwrap_or(ctx.cfg.perturb))?;
    let points = world_points(&est.scans, &est.trajectory);
    let (_, ground) = segment_ground_on(&points, &ctx.cfg.cloth, &layout_for(grid.spec())?)?;
    let map = build_obstruction_map(&grid, &ground, &ctx.cfg.weights, ScoreMode::WeightedMean)?;

    let meta = ctx.meta_body("score", &[("mode", mode.name().into())]);
    let gc = ctx.write_text("ground.csv", "score", &[], |w| write_ground_csv(w, &ground))?;
    let mut pgm = Vec::new();
    write_ground_pgm(&mut pgm, &ground, Some(&meta))?;
    let gp = ctx.write_bytes("ground.pgm", &pgm)?;
    let oc = ctx.write_text(&mode.obstruction_file(), "score", &[("mode", mode.name().into())], |w| {
        write_obstruction_csv(w, &map)
    })?;
    let mut png = Vec::new();
    write_obstruction_png(&mut png, &map, &[("canopy", meta.as_str())])?;
    let op = ctx.write_bytes(&format!("obstruction_{}.png", mode.name()), &png)?;
    Ok(vec![gc, gp, oc, op])
}

fn cell_at(map: &ObstructionMap<f64>, p: [f64; 2], what: &str) -> Result<Cell, CliError> {
    map.layout()
        .cell_of(p[0], p[1])
        .ok_or_else(|| CliError::Usage(format!("{what} ({}, {}) is outside the map", p[0], p[1])))
}

pub struct PlanArgs {
    pub mode: Mode,
    pub cost: Option<CostKind>,
    pub cobst: Option<f64>,
    pub start: Option<[f64; 2]>,
    pub goal: Option<[f64; 2]>,
}

pub fn plan(ctx: &Ctx, args: &PlanArgs) -> Result<Vec<PathBuf>, CliError> {
    let p = ctx.require(&args.mode.obstruction_file(), &format!("score --mode {}", args.mode.name()))?;
    let map: ObstructionMap<f64> = read_obstruction_csv(std::fs::File::open(&p)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
    let l = map.layout();
    let far = [l.origin.x + l.dims[0] as f64 * l.cell_size - 2.0, l.origin.y + l.dims[1] as f64 * l.cell_size - 2.0];
    let start = cell_at(&map, args.start.or(ctx.cfg.plan.start).unwrap_or([2.0, 2.0]), "start")?;
    let goal = cell_at(&map, args.goal.or(ctx.cfg.plan.goal).unwrap_or(far), "goal")?;
    let model = ctx.cfg.plan_model(args.cost.unwrap_or(ctx.cfg.plan.cost), args.cobst.unwrap_or(ctx.cfg.plan.c_obst));
    model.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let path = planner::plan(&map, ctx.cfg.footprint_radius, start, goal, model)?;
    let label = cost_label(&model);
    let reach = path_reachability(&path, &map, ctx.cfg.footprint_radius);
    let extra = [
        ("mode", args.mode.name().to_string()),
        ("cost", label.clone()),
        ("total_cost", path.total_cost.to_string()),
        ("length_m", (path.length() * l.cell_size).to_string()),
        ("reachability", reach.to_string()),
    ];
    let name = format!("path_{}_{label}.csv", args.mode.name());
    let out = ctx.write_text(&name, "plan", &extra, |w| write_path_csv(w, &path, l))?;
    eprintln!("plan: {} cells, reachability {reach:.4}", path.cells.len());
    Ok(vec![out])
}

pub struct MissionArgs {
    pub cost: Option<CostKind>,
    pub cobst: Option<f64>,
    pub local_radius: Option<f64>,
    pub samples: Option<usize>,
}

pub fn mission(ctx: &Ctx, args: &MissionArgs) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg = ctx.cfg.mission.clone();
    if let Some(r) = args.local_radius {
        cfg.mission.local_radius = r;
    }
    if let Some(n) = args.samples {
        cfg.samples = n;
    }
    let lethal = |m: CostModel<f64>| m.with_lethal(ctx.cfg.plan.lethal);
    match (args.cost, args.cobst) {
        (Some(CostKind::Logreach), _) => cfg.costs = vec![lethal(CostModel::log_reach())],
        (Some(CostKind::Expected), Some(c)) | (None, Some(c)) => cfg.costs = vec![lethal(CostModel::expected(c))],
        (Some(CostKind::Expected), None) => {
            cfg.costs = vec![lethal(CostModel::expected(5.0)), lethal(CostModel::expected(20.0))]
        }
        (None, None) => {}
    }
    let study = run_mission_study(&cfg, ctx.seed())?;
    let ratios = study.ratio_reports()?;
    let r = ctx.write_text("mission_ratios.csv", "mission", &[], |w| study.write_ratio_csv(w))?;
    let runs = ctx.write_text("mission_runs.csv", "mission", &[], |w| write_ledger(w, &study.ledger_rows()))?;
    let s = ctx.write_text("mission_summary.txt", "mission", &[], |w| write_summary(w, &[], &ratios))?;
    for (label, rep) in &ratios {
        eprintln!("{label}: mean ratio {:.4} over {} pairs", rep.mean, rep.pairs);
    }
    Ok(vec![r, runs, s])
}

pub struct EvaluateArgs {
    pub ablation: bool,
    pub mode: Mode,
    pub samples: Option<usize>,
    pub perturb: Option<f64>,
}

pub fn evaluate(ctx: &Ctx, args: &EvaluateArgs) -> Result<Vec<PathBuf>, CliError> {
    if args.ablation {
        ablation(ctx, args)
    } else {
        evaluate_map(ctx, args.mode)
    }
}

fn ablation(ctx: &Ctx, args: &EvaluateArgs) -> Result<Vec<PathBuf>, CliError> {
    let section = &ctx.cfg.ablation;
    let mut study = section.study.clone();
    if let Some(n) = args.samples {
        study.samples = n;
    }
    if let Some(k) = args.perturb {
        study.levels = vec![k];
    }
    let mut csv = Vec::new();
    let mut summary = Vec::new();
    for f in 0..section.forests {
        let seed = derive_seed(ctx.seed(), stream::ABLATION + f as u64);
        let scenario = build_scenario(&study.forest, &study.survey, study.voxel_size, &study.sensor, seed)?;
        let results = run_map_ablation(&scenario, &study, seed)?;
        write_ablation_csv(&mut csv, &format!("forest{f}"), &results, f == 0)?;
        for r in &results {
            summary.push((format!("forest{f} k={} standard", r.level), r.standard_report()));
            summary.push((format!("forest{f} k={} ua", r.level), r.ua_report()));
        }
    }
    let c = ctx.write_text("ablation_kld.csv", "evaluate", &[("ablation", "kld".into())], |w| {
        w.extend_from_slice(&csv);
        Ok(())
    })?;
    let s = ctx.write_text("ablation_summary.txt", "evaluate", &[], |w| write_summary(w, &summary, &[]))?;
    Ok(vec![c, s])
}

fn evaluate_map(ctx: &Ctx, mode: Mode) -> Result<Vec<PathBuf>, CliError> {
    let (truth, ideal) = ctx.load_flight()?;
    let est = load_grid(ctx, mode)?;
    let gt: OccupancyGrid<f64> = build_standard_map(&ideal, &truth, &ctx.cfg.sensor, est.spec());
    let report = MapReport::from_reps(&[score_map(&gt, &est)?]);
    let name = format!("eval_{}.csv", mode.name());
    let c = ctx.write_text(&name, "evaluate", &[("mode", mode.name().into())], |w| {
        use std::io::Write;
        writeln!(w, "{MAP_REPORT_HEADER}")?;
        write_map_report_rows(w, mode.name(), &report)
    })?;
    let s = ctx.write_text(&format!("eval_{}.txt", mode.name()), "evaluate", &[], |w| {
        write_summary(w, &[(mode.name().to_string(), report.clone())], &[])
    })?;
    Ok(vec![c, s])
}
