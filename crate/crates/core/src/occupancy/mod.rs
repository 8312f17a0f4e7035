//! Probabilistic 3D occupancy grids built from lidar rays, with and without
//! marginalization over trajectory uncertainty.

mod io;
mod mapping;
mod raycast;
mod sampling;

pub use self::io::{read_grid, read_grid_file, write_grid, write_grid_file, write_slice_csv};
pub use self::mapping::{build_standard_map, build_ua_map, integrate_scan, rays_from, sample_seed, RayCounts};
pub use self::raycast::{traverse_ray, VoxelIndex};
pub use self::sampling::{sample_trajectory, PosteriorModel, TrajectoryPosterior};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{logit, sigmoid, Real};

/// Geometry of a voxel lattice: min corner, cubic voxel edge and voxel counts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub origin: Vector3<f64>,
    pub voxel_size: f64,
    pub dims: [usize; 3],
}

impl GridSpec {
    pub fn new(origin: Vector3<f64>, voxel_size: f64, dims: [usize; 3]) -> Result<Self> {
        if !(voxel_size > 0.0) || !voxel_size.is_finite() {
            return Err(Error::InvalidParam(format!("voxel size {voxel_size} must be > 0")));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidParam(format!("grid dims {dims:?} must be non-zero")));
        }
        Ok(Self {
            origin,
            voxel_size,
            dims,
        })
    }

    /// Smallest grid with its min corner at `min` covering `max`.
    pub fn covering(min: Vector3<f64>, max: Vector3<f64>, voxel_size: f64) -> Result<Self> {
        let dims = [0, 1, 2].map(|a| (((max[a] - min[a]) / voxel_size).ceil() as usize).max(1));
        Self::new(min, voxel_size, dims)
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn to_voxel_units(&self, p: &Point3<f64>) -> [f64; 3] {
        ((p.coords - self.origin) / self.voxel_size).into()
    }

    /// Voxel containing `p`; may lie outside the grid.
    pub fn index_of(&self, p: &Point3<f64>) -> VoxelIndex {
        self.to_voxel_units(p).map(|v| v.floor() as i64)
    }

    pub fn contains(&self, idx: VoxelIndex) -> bool {
        (0..3).all(|a| idx[a] >= 0 && (idx[a] as usize) < self.dims[a])
    }

    /// x-fastest linear index.
    pub fn linear(&self, idx: [usize; 3]) -> usize {
        idx[0] + self.dims[0] * (idx[1] + self.dims[1] * idx[2])
    }

    pub fn linear_checked(&self, idx: VoxelIndex) -> Option<usize> {
        self.contains(idx)
            .then(|| self.linear([idx[0] as usize, idx[1] as usize, idx[2] as usize]))
    }

    pub fn unlinear(&self, i: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [i % nx, (i / nx) % ny, i / (nx * ny)]
    }

    pub fn voxel_corner(&self, idx: VoxelIndex) -> Vector3<f64> {
        self.origin + Vector3::new(idx[0] as f64, idx[1] as f64, idx[2] as f64) * self.voxel_size
    }

    pub fn voxel_center(&self, idx: VoxelIndex) -> Vector3<f64> {
        self.voxel_corner(idx) + Vector3::repeat(self.voxel_size / 2.0)
    }
}

/// Inverse sensor model constants. Log-odds are clamped to
/// `[logit(p_min), logit(p_max)]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub p_hit: f64,
    pub p_miss: f64,
    pub p_min: f64,
    pub p_max: f64,
    /// Rays are truncated to this length and then treated as misses.
    pub max_range: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            p_hit: 0.7,
            p_miss: 0.4,
            p_min: 0.03,
            p_max: 0.97,
            max_range: 100.0,
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.p_miss
            && self.p_miss < 0.5
            && 0.5 < self.p_hit
            && self.p_hit < 1.0
            && 0.0 < self.p_min
            && self.p_min < 0.5
            && 0.5 < self.p_max
            && self.p_max < 1.0
            && self.max_range > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("invalid sensor model {self:?}")))
        }
    }

    pub fn hit_log_odds<T: Real>(&self) -> T {
        logit(T::lit(self.p_hit))
    }

    pub fn miss_log_odds<T: Real>(&self) -> T {
        logit(T::lit(self.p_miss))
    }

    pub fn clamp<T: Real>(&self, l: T) -> T {
        l.max(logit(T::lit(self.p_min))).min(logit(T::lit(self.p_max)))
    }
}

/// Dense voxel grid of occupancy log-odds plus an observed mask. Unobserved
/// voxels report probability exactly 0.5.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid<T> {
    spec: GridSpec,
    log_odds: Vec<T>,
    observed: Vec<bool>,
}

impl<T: Real> OccupancyGrid<T> {
    pub fn new(spec: GridSpec) -> Self {
        Self {
            spec,
            log_odds: vec![T::zero(); spec.len()],
            observed: vec![false; spec.len()],
        }
    }

    pub fn from_parts(spec: GridSpec, log_odds: Vec<T>, observed: Vec<bool>) -> Result<Self> {
        if log_odds.len() != spec.len() || observed.len() != spec.len() {
            return Err(Error::InvalidParam("grid arrays do not match dims".into()));
        }
        Ok(Self {
            spec,
            log_odds,
            observed,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn log_odds(&self) -> &[T] {
        &self.log_odds
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn is_observed(&self, i: usize) -> bool {
        self.observed[i]
    }

    /// Occupancy probability of a voxel by linear index.
    pub fn probability(&self, i: usize) -> T {
        if self.observed[i] {
            sigmoid(self.log_odds[i])
        } else {
            T::lit(0.5)
        }
    }

    /// Probability at a possibly out-of-grid voxel; outside voxels are unobserved.
    pub fn probability_at(&self, idx: VoxelIndex) -> T {
        match self.spec.linear_checked(idx) {
            Some(i) => self.probability(i),
            None => T::lit(0.5),
        }
    }

    pub fn set_probability(&mut self, i: usize, p: T) {
        self.log_odds[i] = logit(p);
        self.observed[i] = true;
    }

    pub(crate) fn set_raw(&mut self, i: usize, log_odds: T, observed: bool) {
        self.log_odds[i] = log_odds;
        self.observed[i] = observed;
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    /// Converts the stored values to another scalar type.
    pub fn cast<U: Real>(&self) -> OccupancyGrid<U> {
        OccupancyGrid {
            spec: self.spec,
            log_odds: self.log_odds.iter().map(|v| U::lit(v.as_f64())).collect(),
            observed: self.observed.clone(),
        }
    }
}
