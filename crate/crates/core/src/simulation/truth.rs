//! Ground-truth maps and analytic traversability.

use nalgebra::{Vector2, Vector3};

use super::world::World;
use crate::error::Result;
use crate::geom_io::{ScanSet, Trajectory};
use crate::ground_filter::{CellLayout, GroundHeightMap, HeightSource};
use crate::obstruction::{build_obstruction_map, footprint_offsets, ObstructionMap, ScoreMode};
use crate::occupancy::{build_standard_map, GridSpec, OccupancyGrid, SensorModel};
use crate::scalar::Real;

/// Grid over the world's XY extent from just below the lowest terrain to
/// just above the highest surface, and at least 2 m above the terrain. The
/// lowest terrain point sits at the middle of a voxel, so flat ground does
/// not straddle a voxel boundary.
pub fn grid_spec_for(world: &World, voxel_size: f64) -> Result<GridSpec> {
    let lo = Vector3::new(0.0, 0.0, world.terrain.min_height() - 1.5 * voxel_size);
    let top = world.max_height().max(world.terrain.max_height() + 2.0);
    let hi = Vector3::new(world.size[0], world.size[1], top + voxel_size);
    GridSpec::covering(lo, hi, voxel_size)
}

/// Cell layout sharing the grid's XY origin and resolution.
pub fn layout_for(spec: &GridSpec) -> Result<CellLayout> {
    CellLayout::new(spec.origin.xy(), spec.voxel_size, [spec.dims[0], spec.dims[1]])
}

/// Terrain heights at cell centers.
pub fn terrain_ground_map(world: &World, layout: &CellLayout) -> GroundHeightMap {
    let heights = (0..layout.len())
        .map(|k| {
            let (i, j) = layout.unindex(k);
            let c = layout.center(i, j);
            world.ground_height(c.x, c.y)
        })
        .collect();
    GroundHeightMap {
        layout: *layout,
        heights,
        source: vec![HeightSource::Measured; layout.len()],
    }
}

/// Standard map of the ideal scans along the true trajectory, and the
/// obstruction map scored over the analytic terrain.
pub fn build_ground_truth_map<T: Real>(
    world: &World,
    ideal: &ScanSet,
    trajectory: &Trajectory,
    model: &SensorModel,
    spec: &GridSpec,
    weights: &[T],
) -> Result<(OccupancyGrid<T>, ObstructionMap<T>)> {
    let grid = build_standard_map(ideal, trajectory, model, spec);
    let ground = terrain_ground_map(world, &layout_for(spec)?);
    let obst = build_obstruction_map(&grid, &ground, weights, ScoreMode::WeightedMean)?;
    Ok((grid, obst))
}

/// Cells whose ground column (up to `clearance`) meets an obstacle.
#[derive(Clone, Debug, PartialEq)]
pub struct TraversabilityMask {
    pub layout: CellLayout,
    pub blocked: Vec<bool>,
}

impl TraversabilityMask {
    /// A cell is blocked if the column at its center or at any of the four
    /// points a quarter cell away from it meets an obstacle.
    pub fn from_world(world: &World, layout: &CellLayout, clearance: f64) -> Self {
        let q = 0.25 * layout.cell_size;
        let probes = [(0.0, 0.0), (-q, -q), (q, -q), (-q, q), (q, q)];
        let blocked = (0..layout.len())
            .map(|k| {
                let (i, j) = layout.unindex(k);
                let c = layout.center(i, j);
                probes.iter().any(|(dx, dy)| world.column_blocked(c.x + dx, c.y + dy, clearance))
            })
            .collect();
        Self { layout: *layout, blocked }
    }

    pub fn is_blocked(&self, c: (usize, usize)) -> bool {
        self.blocked[self.layout.index(c.0, c.1)]
    }

    /// Free for a robot of the given footprint; cells near the map edge are not.
    pub fn is_clear(&self, c: (usize, usize), footprint_radius: f64) -> bool {
        footprint_offsets(footprint_radius, self.layout.cell_size).iter().all(|&(dx, dy)| {
            let (x, y) = (c.0 as i64 + dx, c.1 as i64 + dy);
            x >= 0
                && y >= 0
                && (x as usize) < self.layout.dims[0]
                && (y as usize) < self.layout.dims[1]
                && !self.blocked[self.layout.index(x as usize, y as usize)]
        })
    }

    pub fn center(&self, c: (usize, usize)) -> Vector2<f64> {
        self.layout.center(c.0, c.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::flight::{simulate_flight, FlightSpec, LidarSpec};
    use crate::simulation::world::{Primitive, Terrain};

    fn scanned(world: &World) -> (crate::simulation::flight::Flight, GridSpec) {
        let mut spec = FlightSpec::lawnmower(world.size, 15.0, 4.0, 2.0, 1.0);
        spec.lidar = LidarSpec { azimuth_half_deg: 40.0, azimuth_step_deg: 1.0, ..Default::default() };
        (simulate_flight(world, &spec, 3).unwrap(), grid_spec_for(world, 0.25).unwrap())
    }

    #[test]
    fn empty_world_columns_free() {
        let world = World::new([12.0, 12.0], Terrain::Flat { height: 0.0 }, vec![], 1);
        let (f, spec) = scanned(&world);
        let (grid, obst) =
            build_ground_truth_map::<f64>(&world, &f.ideal, &f.trajectory, &SensorModel::default(), &spec, &[1.0, 2.0, 2.0, 2.0]).unwrap();
        assert!(grid.observed_count() > 0);
        let [nx, ny] = obst.dims();
        let inner: Vec<f64> = (8..ny - 8).flat_map(|y| (8..nx - 8).map(move |x| (x, y))).map(|(x, y)| obst.score(x as i64, y as i64)).collect();
        assert!(inner.iter().all(|&b| b < 0.5), "{:?}", inner.iter().copied().fold(0.0, f64::max));
    }

    #[test]
    fn trunk_voxel_is_occupied() {
        let tree = Primitive::Cylinder { center: [6.1, 6.1], base: 0.0, height: 7.8, radius: 0.4 };
        let world = World::new([12.0, 12.0], Terrain::Flat { height: 0.0 }, vec![tree], 1);
        let (f, spec) = scanned(&world);
        let grid: OccupancyGrid<f64> = build_standard_map(&f.ideal, &f.trajectory, &SensorModel::default(), &spec);
        let top = spec.index_of(&nalgebra::Point3::new(6.1, 6.1, 7.8));
        let i = spec.linear_checked(top).unwrap();
        assert!(world.is_solid(&spec.voxel_center(top)));
        assert!(grid.probability(i) > 0.55);
        let hits_in_voxel = crate::geom_io::world_points(&f.ideal, &f.trajectory)
            .iter()
            .filter(|p| spec.index_of(&nalgebra::Point3::from(**p)) == top)
            .count();
        assert!(hits_in_voxel > 0);
    }

    #[test]
    fn shadowed_voxels_stay_unobserved() {
        let slab = Primitive::Box { center: [6.0, 6.0, 5.0], half_extents: [5.0, 5.0, 0.5], yaw: 0.0 };
        let world = World::new([12.0, 12.0], Terrain::Flat { height: 0.0 }, vec![slab], 1);
        let mut spec = FlightSpec { waypoints: vec![[6.0, 3.0, 10.0], [6.0, 9.0, 10.0]], speed: 1.0, scan_rate: 1.0, lidar: Default::default(), range_sigma: 0.0 };
        spec.lidar.azimuth_half_deg = 10.0;
        let f = simulate_flight(&world, &spec, 0).unwrap();
        let gs = grid_spec_for(&world, 0.25).unwrap();
        let grid: OccupancyGrid<f64> = build_standard_map(&f.ideal, &f.trajectory, &SensorModel::default(), &gs);
        let under = gs.linear_checked(gs.index_of(&nalgebra::Point3::new(6.0, 6.0, 1.0))).unwrap();
        assert!(!grid.is_observed(under));
        assert_eq!(grid.probability(under), 0.5);
    }

    #[test]
    fn mask_and_clearance() {
        let log = Primitive::Box { center: [5.0, 5.0, 0.25], half_extents: [2.0, 0.25, 0.25], yaw: 0.0 };
        let world = World::new([10.0, 10.0], Terrain::Flat { height: 0.0 }, vec![log], 0);
        let layout = CellLayout::new(Vector2::zeros(), 0.25, [40, 40]).unwrap();
        let m = TraversabilityMask::from_world(&world, &layout, 1.0);
        assert!(m.is_blocked((20, 20)));
        assert!(!m.is_blocked((20, 22)));
        assert!(!m.is_clear((20, 21), 0.4));
        assert!(m.is_clear((20, 23), 0.4));
        assert!(!m.is_clear((0, 5), 0.4));
        let high = TraversabilityMask::from_world(&world, &layout, 1.0);
        assert_eq!(high, m);
    }

    #[test]
    fn grid_spans_world() {
        let world = World::new([10.0, 8.0], Terrain::Sinusoidal { base: 0.0, amplitude: 0.6, wavelength: 5.0 }, vec![], 0);
        let spec = grid_spec_for(&world, 0.25).unwrap();
        assert_eq!(&spec.dims[..2], &[40, 32]);
        assert!(spec.origin.z <= -0.6 - 0.25);
        let l = layout_for(&spec).unwrap();
        let g = terrain_ground_map(&world, &l);
        assert!((g.height(3, 7) - world.ground_height(0.875, 1.875)).abs() < 1e-12);
    }
}
