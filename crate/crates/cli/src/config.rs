//! TOML run configuration and its content hash.

use std::path::Path;

use canopy::experiment::{table_base_noise, MapAblationConfig, MissionStudyConfig, SurveySpec};
use canopy::geom_io::NoiseSpec;
use canopy::ground_filter::ClothParams;
use canopy::obstruction::{DEFAULT_FOOTPRINT_RADIUS, DEFAULT_WEIGHTS};
use canopy::occupancy::SensorModel;
use canopy::planner::CostModel;
use canopy::simulation::ForestParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    Expected,
    Logreach,
}

/// Start and goal in world meters plus the planner cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSection {
    /// Defaults to 2 m in from the origin corner.
    pub start: Option<[f64; 2]>,
    /// Defaults to 2 m in from the far corner.
    pub goal: Option<[f64; 2]>,
    pub cost: CostKind,
    pub c_obst: f64,
    pub lethal: bool,
}

impl Default for PlanSection {
    fn default() -> Self {
        Self { start: None, goal: None, cost: CostKind::Logreach, c_obst: 5.0, lethal: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationSection {
    /// Independent forests, each built from its own derived seed.
    pub forests: usize,
    #[serde(flatten)]
    pub study: MapAblationConfig,
}

impl Default for AblationSection {
    fn default() -> Self {
        Self { forests: 3, study: MapAblationConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub voxel_size: f64,
    /// Trajectory samples for UA maps.
    pub samples: usize,
    /// Estimate error as a multiple of `noise`.
    pub perturb: f64,
    /// Obstruction column weights, ground voxel first.
    pub weights: Vec<f64>,
    pub footprint_radius: f64,
    pub world: ForestParams,
    pub survey: SurveySpec,
    pub sensor: SensorModel,
    /// Base pose noise.
    #[serde(default = "table_base_noise")]
    pub noise: NoiseSpec,
    pub cloth: ClothParams,
    pub plan: PlanSection,
    pub mission: MissionStudyConfig,
    pub ablation: AblationSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            voxel_size: 0.25,
            samples: 20,
            perturb: 1.0,
            weights: DEFAULT_WEIGHTS.to_vec(),
            footprint_radius: DEFAULT_FOOTPRINT_RADIUS,
            world: ForestParams::default(),
            // The mission survey: denser scans than the ablation default.
            survey: MissionStudyConfig::default().survey,
            sensor: SensorModel::default(),
            noise: table_base_noise(),
            cloth: ClothParams::default(),
            plan: PlanSection::default(),
            mission: MissionStudyConfig::default(),
            ablation: AblationSection::default(),
        }
    }
}

fn one_line(s: impl std::fmt::Display) -> String {
    s.to_string().split_whitespace().collect::<Vec<_>>().join(" ")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {}", path.display(), one_line(e))))?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), one_line(e))))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if !(self.voxel_size > 0.0) {
            return bad("voxel_size must be positive");
        }
        if self.samples == 0 {
            return bad("samples must be at least 1");
        }
        if !(self.perturb >= 0.0) {
            return bad("perturb must be >= 0");
        }
        if self.weights.is_empty() || self.weights.iter().any(|w| !(*w > 0.0)) {
            return bad("weights must be non-empty and positive");
        }
        if !(self.footprint_radius >= 0.0) {
            return bad("footprint_radius must be >= 0");
        }
        if self.ablation.forests == 0 {
            return bad("ablation.forests must be at least 1");
        }
        let check = |r: canopy::Result<()>| r.map_err(|e| CliError::Config(one_line(e)));
        check(self.world.validate())?;
        check(self.ablation.study.forest.validate())?;
        check(self.mission.forest.validate())?;
        check(self.noise.validate())?;
        check(self.sensor.validate())?;
        for c in &self.mission.costs {
            check(c.validate())?;
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form, so formatting and key order in
    /// the TOML file do not matter.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn plan_model(&self, cost: CostKind, c_obst: f64) -> CostModel<f64> {
        match cost {
            CostKind::Expected => CostModel::expected(c_obst),
            CostKind::Logreach => CostModel::log_reach(),
        }
        .with_lethal(self.plan.lethal)
    }
}
