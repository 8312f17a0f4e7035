//! Uncertainty-aware aerial lidar mapping and risk-aware ground path planning
//! for under-canopy navigation.
//!
//! Pipeline: aerial scans and a trajectory posterior ([`geom_io`]) are
//! segmented into ground heights ([`ground_filter`]) and integrated into a 3D
//! occupancy grid, optionally averaged over trajectory samples
//! ([`occupancy`]). Columns above the ground collapse to a 2D obstruction
//! score ([`obstruction`]) that drives D* Lite planning under expected-cost
//! or log-reachability edge costs ([`planner`]). [`simulation`] provides a
//! procedural forest, a lidar flight simulator and a local mission executor,
//! and [`evaluation`] the map and mission metrics.
//!
//! Probability, score and cost math is generic over [`Real`] (`f32`/`f64`);
//! the aliases below fix the scalar type.

pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod geom_io;
mod meta;
pub mod ground_filter;
pub mod obstruction;
pub mod occupancy;
pub mod planner;
pub mod rng;
pub mod scalar;
pub mod simulation;

pub use error::{Error, Result};
pub use scalar::Real;

pub type OccupancyGridF32 = occupancy::OccupancyGrid<f32>;
pub type OccupancyGridF64 = occupancy::OccupancyGrid<f64>;
pub type ObstructionMapF32 = obstruction::ObstructionMap<f32>;
pub type ObstructionMapF64 = obstruction::ObstructionMap<f64>;
pub type CostModelF64 = planner::CostModel<f64>;
pub type DStarLiteF64 = planner::DStarLite<f64>;
pub type PathF64 = planner::Path<f64>;
