//! Simulation protocols: the map-accuracy ablation under pose perturbation
//! and the executed-length study against the naive planner.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{
    path_ratio_report, score_map, write_map_report_rows, write_ratio_row, MapReport, MapScores, RatioReport, RunRecord,
    RATIO_HEADER,
};
use crate::geom_io::{world_points, NoiseSpec, ScanSet, Trajectory};
use crate::ground_filter::{segment_ground_on, ClothParams, GroundHeightMap};
use crate::obstruction::{build_obstruction_map, ObstructionMap, ScoreMode, DEFAULT_WEIGHTS};
use crate::occupancy::{
    build_standard_map, build_ua_map, sample_trajectory, GridSpec, OccupancyGrid, PosteriorModel, SensorModel,
    TrajectoryPosterior,
};
use crate::planner::{Cell, CostMode, CostModel};
use crate::rng::derive_seed;
use crate::simulation::{
    add_range_noise, generate_forest, grid_spec_for, layout_for, run_mission_on, sample_mission_pairs, simulate_flight,
    Flight, FlightSpec, ForestParams, LedgerRow, LidarSpec, MissionConfig, MissionResult, TraversabilityMask, World,
};

/// Lawnmower survey flown a fixed height above the canopy top.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurveySpec {
    pub height_above_canopy: f64,
    pub line_spacing: f64,
    pub speed: f64,
    pub scan_rate: f64,
    pub lidar: LidarSpec,
    pub range_sigma: f64,
}

impl Default for SurveySpec {
    fn default() -> Self {
        Self {
            height_above_canopy: 4.0,
            line_spacing: 10.0,
            speed: 2.0,
            scan_rate: 1.0,
            lidar: LidarSpec { azimuth_half_deg: 45.0, ..LidarSpec::default() },
            range_sigma: 0.01,
        }
    }
}

impl SurveySpec {
    pub fn flight_for(&self, world: &World) -> FlightSpec {
        let altitude = world.max_height() + self.height_above_canopy;
        let mut f = FlightSpec::lawnmower(world.size, altitude, self.line_spacing, self.speed, self.scan_rate);
        f.lidar = self.lidar;
        f.range_sigma = self.range_sigma;
        f
    }
}

/// A world, its survey flight and the ground-truth map of the ideal scans.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub world: World,
    pub flight: Flight,
    pub spec: GridSpec,
    pub ground_truth: OccupancyGrid<f64>,
}

pub fn build_scenario(
    forest: &ForestParams,
    survey: &SurveySpec,
    voxel_size: f64,
    sensor: &SensorModel,
    seed: u64,
) -> Result<Scenario> {
    let world = generate_forest(forest, derive_seed(seed, 1))?;
    scenario_for(world, survey, voxel_size, sensor, seed)
}

/// [`build_scenario`] for an existing world.
pub fn scenario_for(world: World, survey: &SurveySpec, voxel_size: f64, sensor: &SensorModel, seed: u64) -> Result<Scenario> {
    let flight = simulate_flight(&world, &survey.flight_for(&world), derive_seed(seed, 2))?;
    let spec = grid_spec_for(&world, voxel_size)?;
    let ground_truth = build_standard_map(&flight.ideal, &flight.trajectory, sensor, &spec);
    Ok(Scenario { world, flight, spec, ground_truth })
}

/// A perturbed trajectory estimate with fresh range noise, and the posterior
/// centered on it.
#[derive(Clone, Debug)]
pub struct Estimate {
    pub trajectory: Trajectory,
    pub scans: ScanSet,
    pub posterior: TrajectoryPosterior,
}

/// Draws the estimate from `model` around the true trajectory.
pub fn perturbed_estimate(scenario: &Scenario, model: &PosteriorModel, range_sigma: f64, seed: u64) -> Result<Estimate> {
    let truth = TrajectoryPosterior::new(scenario.flight.trajectory.clone(), *model)?;
    let trajectory = sample_trajectory(&truth, derive_seed(seed, 0));
    let scans = add_range_noise(&scenario.flight.ideal, range_sigma, derive_seed(seed, 1))?;
    let posterior = TrajectoryPosterior::new(trajectory.clone(), *model)?;
    Ok(Estimate { trajectory, scans, posterior })
}

/// Standard map over the estimate and the UA map over its posterior.
pub fn estimate_maps(
    est: &Estimate,
    samples: usize,
    sensor: &SensorModel,
    spec: &GridSpec,
    seed: u64,
) -> Result<(OccupancyGrid<f64>, OccupancyGrid<f64>)> {
    let standard = build_standard_map(&est.scans, &est.trajectory, sensor, spec);
    let ua = build_ua_map(&est.scans, &est.posterior, samples, sensor, spec, derive_seed(seed, 2))?;
    Ok((standard, ua))
}

/// GPS-like base noise `(0.015 m, 0.11°)` per pose component.
pub fn table_base_noise() -> NoiseSpec {
    NoiseSpec::from_meters_degrees([0.015; 3], [0.11; 3])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapAblationConfig {
    pub forest: ForestParams,
    pub survey: SurveySpec,
    pub voxel_size: f64,
    pub sensor: SensorModel,
    pub base_noise: NoiseSpec,
    /// Multipliers of `base_noise`.
    pub levels: Vec<f64>,
    pub repetitions: usize,
    pub samples: usize,
}

impl Default for MapAblationConfig {
    fn default() -> Self {
        Self {
            forest: ForestParams::default(),
            survey: SurveySpec::default(),
            voxel_size: 0.25,
            sensor: SensorModel::default(),
            base_noise: table_base_noise(),
            levels: vec![1.0, 5.0, 10.0, 20.0],
            repetitions: 10,
            samples: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelResult {
    pub level: f64,
    pub standard: Vec<MapScores>,
    pub ua: Vec<MapScores>,
}

impl LevelResult {
    pub fn standard_report(&self) -> MapReport {
        MapReport::from_reps(&self.standard)
    }

    pub fn ua_report(&self) -> MapReport {
        MapReport::from_reps(&self.ua)
    }
}

/// One repetition at one noise level: perturb, map both ways, score.
pub fn ablation_rep(scenario: &Scenario, cfg: &MapAblationConfig, level: f64, seed: u64) -> Result<(MapScores, MapScores)> {
    let model = PosteriorModel::GpsIndependent(cfg.base_noise.scaled(level));
    let est = perturbed_estimate(scenario, &model, cfg.survey.range_sigma, seed)?;
    let (standard, ua) = estimate_maps(&est, cfg.samples, &cfg.sensor, &scenario.spec, seed)?;
    Ok((score_map(&scenario.ground_truth, &standard)?, score_map(&scenario.ground_truth, &ua)?))
}

/// All levels and repetitions on one scenario.
pub fn run_map_ablation(scenario: &Scenario, cfg: &MapAblationConfig, seed: u64) -> Result<Vec<LevelResult>> {
    if cfg.repetitions == 0 {
        return Err(Error::InvalidParam("at least one repetition is required".into()));
    }
    cfg.levels
        .iter()
        .enumerate()
        .map(|(li, &level)| {
            let level_seed = derive_seed(seed, 100 + li as u64);
            let mut standard = Vec::with_capacity(cfg.repetitions);
            let mut ua = Vec::with_capacity(cfg.repetitions);
            for r in 0..cfg.repetitions {
                let (s, u) = ablation_rep(scenario, cfg, level, derive_seed(level_seed, r as u64))?;
                standard.push(s);
                ua.push(u);
            }
            Ok(LevelResult { level, standard, ua })
        })
        .collect()
}

pub const ABLATION_HEADER: &str = "scenario,level,method,metric,class,mean,std,n,count";

/// Per-class KLD and AUC rows for each level and method.
pub fn write_ablation_csv<W: Write>(mut w: W, scenario: &str, results: &[LevelResult], header: bool) -> Result<()> {
    if header {
        writeln!(w, "{ABLATION_HEADER}")?;
    }
    for r in results {
        write_map_report_rows(&mut w, &format!("{scenario},{},standard", r.level), &r.standard_report())?;
        write_map_report_rows(&mut w, &format!("{scenario},{},ua", r.level), &r.ua_report())?;
    }
    Ok(())
}

/// Short label of a cost model: `logreach` or `exp<C>`.
pub fn cost_label(model: &CostModel<f64>) -> String {
    match model.mode {
        CostMode::LogReach => "logreach".into(),
        CostMode::Expected { c_obst } => format!("exp{c_obst}"),
    }
}

/// Forest with more ground obstacles than the mapping default.
pub fn obstacle_rich_forest() -> ForestParams {
    ForestParams {
        log_density: 0.01,
        log_length: [6.0, 12.0],
        bush_density: 0.012,
        ..ForestParams::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissionStudyConfig {
    pub forest: ForestParams,
    pub survey: SurveySpec,
    pub voxel_size: f64,
    pub sensor: SensorModel,
    pub samples: usize,
    pub gps: NoiseSpec,
    pub slam_drift: NoiseSpec,
    pub slam_absolute: NoiseSpec,
    pub correction_period: f64,
    pub pairs: usize,
    pub min_separation: f64,
    pub mission: MissionConfig,
    pub costs: Vec<CostModel<f64>>,
    pub cloth: ClothParams,
}

impl Default for MissionStudyConfig {
    fn default() -> Self {
        Self {
            forest: obstacle_rich_forest(),
            survey: SurveySpec { scan_rate: 4.0, ..SurveySpec::default() },
            voxel_size: 0.25,
            sensor: SensorModel::default(),
            samples: 20,
            gps: NoiseSpec::from_meters_degrees([0.05; 3], [0.1; 3]),
            slam_drift: NoiseSpec::from_meters_degrees([0.009, 0.009, 0.002], [0.0057; 3]),
            slam_absolute: NoiseSpec::from_meters_degrees([0.05; 3], [0.1; 3]),
            correction_period: 120.0,
            pairs: 40,
            min_separation: 30.0,
            mission: MissionConfig::default(),
            costs: vec![CostModel::log_reach(), CostModel::expected(5.0), CostModel::expected(20.0)],
            cloth: ClothParams::default(),
        }
    }
}

impl MissionStudyConfig {
    /// `(name, model)` for the GPS-like and SLAM-like estimates.
    pub fn noise_models(&self) -> Vec<(&'static str, PosteriorModel)> {
        vec![
            ("gps", PosteriorModel::GpsIndependent(self.gps)),
            (
                "slam",
                PosteriorModel::SlamDrift {
                    drift: self.slam_drift,
                    absolute: self.slam_absolute,
                    correction_period: self.correction_period,
                },
            ),
        ]
    }
}

/// Ground heights from cloth filtering the estimate's points, on the grid's
/// cell layout.
pub fn estimate_ground(est: &Estimate, spec: &GridSpec, cloth: &ClothParams) -> Result<GroundHeightMap> {
    let points = world_points(&est.scans, &est.trajectory);
    Ok(segment_ground_on(&points, cloth, &layout_for(spec)?)?.1)
}

/// Standard and UA obstruction maps from one trajectory estimate.
pub fn prior_maps(
    scenario: &Scenario,
    est: &Estimate,
    cfg: &MissionStudyConfig,
    seed: u64,
) -> Result<(ObstructionMap<f64>, ObstructionMap<f64>)> {
    let (standard, ua) = estimate_maps(est, cfg.samples, &cfg.sensor, &scenario.spec, seed)?;
    let ground = estimate_ground(est, &scenario.spec, &cfg.cloth)?;
    let w = DEFAULT_WEIGHTS;
    Ok((
        build_obstruction_map(&standard, &ground, &w, ScoreMode::WeightedMean)?,
        build_obstruction_map(&ua, &ground, &w, ScoreMode::WeightedMean)?,
    ))
}

/// Missions of one planner configuration over all pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct Arm {
    /// `gps`/`slam`, empty for the naive planner.
    pub noise: String,
    /// `standard`, `ua` or `naive`.
    pub prior: String,
    pub cost: String,
    pub results: Vec<MissionResult>,
}

impl Arm {
    pub fn records(&self, pairs: &[(Cell, Cell)], seed: u64) -> Vec<RunRecord> {
        pairs
            .iter()
            .zip(&self.results)
            .map(|(&(start, goal), r)| RunRecord { start, goal, seed, length: r.length, success: r.success })
            .collect()
    }

    pub fn label(&self) -> String {
        if self.prior == "naive" {
            format!("naive-{}", self.cost)
        } else {
            format!("{}-{}-{}", self.noise, self.prior, self.cost)
        }
    }
}

#[derive(Clone, Debug)]
pub struct MissionStudy {
    pub seed: u64,
    pub pairs: Vec<(Cell, Cell)>,
    pub naive: Vec<Arm>,
    pub arms: Vec<Arm>,
}

impl MissionStudy {
    pub fn naive_for(&self, cost: &str) -> Option<&Arm> {
        self.naive.iter().find(|a| a.cost == cost)
    }

    /// Ratio report of every prior arm against the naive arm of the same cost.
    pub fn ratio_reports(&self) -> Result<Vec<(String, RatioReport)>> {
        self.arms
            .iter()
            .map(|a| {
                let naive = self
                    .naive_for(&a.cost)
                    .ok_or_else(|| Error::Unpaired(format!("no naive arm for {}", a.cost)))?;
                let r = path_ratio_report(&a.records(&self.pairs, self.seed), &naive.records(&self.pairs, self.seed))?;
                Ok((a.label(), r))
            })
            .collect()
    }

    pub fn ledger_rows(&self) -> Vec<LedgerRow> {
        self.naive
            .iter()
            .chain(&self.arms)
            .flat_map(|a| {
                a.results.iter().enumerate().map(move |(i, r)| LedgerRow {
                    run_id: format!("{}-{i:02}", a.label()),
                    mode: a.prior.clone(),
                    cost: a.cost.clone(),
                    length: r.length,
                    replans: r.replans,
                    success: r.success,
                })
            })
            .collect()
    }

    pub fn write_ratio_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{RATIO_HEADER}")?;
        for (label, r) in self.ratio_reports()? {
            write_ratio_row(&mut w, &label, &r)?;
        }
        Ok(())
    }
}

fn run_arm(
    mask: &TraversabilityMask,
    prior: Option<&ObstructionMap<f64>>,
    pairs: &[(Cell, Cell)],
    model: CostModel<f64>,
    cfg: &MissionConfig,
) -> Result<Vec<MissionResult>> {
    pairs
        .par_iter()
        .map(|&(s, g)| run_mission_on(mask, prior, s, g, model, cfg))
        .collect()
}

/// Full study on a prepared scenario.
pub fn run_mission_study_on(scenario: &Scenario, cfg: &MissionStudyConfig, seed: u64) -> Result<MissionStudy> {
    let layout = layout_for(&scenario.spec)?;
    let mask = TraversabilityMask::from_world(&scenario.world, &layout, cfg.mission.clearance);
    let pairs = sample_mission_pairs(&mask, cfg.pairs, cfg.min_separation, cfg.mission.footprint_radius, derive_seed(seed, 5))?;

    let mut naive = Vec::new();
    for model in &cfg.costs {
        model.validate()?;
        naive.push(Arm {
            noise: String::new(),
            prior: "naive".into(),
            cost: cost_label(model),
            results: run_arm(&mask, None, &pairs, *model, &cfg.mission)?,
        });
    }

    let mut arms = Vec::new();
    for (ni, (noise, model)) in cfg.noise_models().into_iter().enumerate() {
        let nseed = derive_seed(seed, 10 + ni as u64);
        let est = perturbed_estimate(scenario, &model, cfg.survey.range_sigma, nseed)?;
        let (standard, ua) = prior_maps(scenario, &est, cfg, nseed)?;
        for (prior, map) in [("standard", &standard), ("ua", &ua)] {
            for cost in &cfg.costs {
                arms.push(Arm {
                    noise: noise.into(),
                    prior: prior.into(),
                    cost: cost_label(cost),
                    results: run_arm(&mask, Some(map), &pairs, *cost, &cfg.mission)?,
                });
            }
        }
    }
    Ok(MissionStudy { seed, pairs, naive, arms })
}

pub fn run_mission_study(cfg: &MissionStudyConfig, seed: u64) -> Result<MissionStudy> {
    let scenario = build_scenario(&cfg.forest, &cfg.survey, cfg.voxel_size, &cfg.sensor, seed)?;
    run_mission_study_on(&scenario, cfg, seed)
}
