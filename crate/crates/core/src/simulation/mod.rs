//! Synthetic forests, aerial lidar flights and ground missions.

mod flight;
mod mission;
mod truth;
mod world;

pub use self::flight::{add_range_noise, simulate_flight, Flight, FlightSpec, LidarSpec};
pub use self::mission::{
    run_mission, run_mission_on, sample_mission_pairs, write_ledger, write_ledger_rows, LedgerRow, MissionConfig,
    MissionResult, LEDGER_HEADER,
};
pub use self::truth::{build_ground_truth_map, grid_spec_for, layout_for, terrain_ground_map, TraversabilityMask};
pub use self::world::{generate_forest, ForestParams, Primitive, Terrain, World};
