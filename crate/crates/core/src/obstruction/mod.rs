//! Ground-level obstruction scores from occupancy columns above the terrain.

mod io;

pub use self::io::{read_obstruction, read_obstruction_csv, write_obstruction, write_obstruction_csv, write_obstruction_png};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ground_filter::{CellLayout, GroundHeightMap};
use crate::occupancy::{OccupancyGrid, VoxelIndex};
use crate::scalar::Real;

/// Voxels per column (1 m clearance at 0.25 m voxels).
pub const DEFAULT_COLUMN_HEIGHT: usize = 4;
/// Column weights, bottom to top.
pub const DEFAULT_WEIGHTS: [f64; 4] = [1.0, 2.0, 2.0, 2.0];
/// Robot footprint radius in meters.
pub const DEFAULT_FOOTPRINT_RADIUS: f64 = 0.4;

/// How a column of occupancy probabilities collapses to one score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Normalized weighted mean of the column probabilities.
    #[default]
    WeightedMean,
    /// `1 - prod(1 - p)`: obstructed if any voxel is. Kept for comparisons.
    AnyOccupied,
}

/// Per-cell obstruction score `b(s)` in `[0, 1]` with the ground heights it
/// was computed against.
#[derive(Clone, Debug, PartialEq)]
pub struct ObstructionMap<T> {
    layout: CellLayout,
    scores: Vec<T>,
    ground: Vec<f64>,
    n: usize,
    weights: Vec<T>,
    b_min: T,
}

impl<T: Real> ObstructionMap<T> {
    /// Map from precomputed scores. Scores must lie in `[0, 1]`.
    pub fn from_scores(layout: CellLayout, scores: Vec<T>, ground: Vec<f64>) -> Result<Self> {
        if scores.len() != layout.len() || ground.len() != layout.len() {
            return Err(Error::InvalidParam("obstruction arrays do not match layout".into()));
        }
        if let Some(b) = scores.iter().find(|b| !(**b >= T::zero() && **b <= T::one())) {
            return Err(Error::InvalidParam(format!("score {b} outside [0, 1]")));
        }
        let b_min = min_score(&scores);
        Ok(Self {
            layout,
            scores,
            ground,
            n: DEFAULT_COLUMN_HEIGHT,
            weights: DEFAULT_WEIGHTS.iter().map(|&w| T::lit(w)).collect(),
            b_min,
        })
    }

    /// Every cell at score `b` over flat ground at height 0.
    pub fn uniform(layout: CellLayout, b: T) -> Result<Self> {
        Self::from_scores(layout, vec![b; layout.len()], vec![0.0; layout.len()])
    }

    pub fn layout(&self) -> &CellLayout {
        &self.layout
    }

    pub fn scores(&self) -> &[T] {
        &self.scores
    }

    pub fn ground_heights(&self) -> &[f64] {
        &self.ground
    }

    pub fn column_height(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn b_min(&self) -> T {
        self.b_min
    }

    pub fn dims(&self) -> [usize; 2] {
        self.layout.dims
    }

    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.layout.dims[0] && (y as usize) < self.layout.dims[1]
    }

    /// Score of an in-bounds cell; out-of-bounds cells score 1.
    pub fn score(&self, x: i64, y: i64) -> T {
        if self.in_bounds(x, y) {
            self.scores[self.layout.index(x as usize, y as usize)]
        } else {
            T::one()
        }
    }

    pub fn set_score(&mut self, x: usize, y: usize, b: T) {
        let k = self.layout.index(x, y);
        self.scores[k] = b;
        self.b_min = min_score(&self.scores);
    }
}

fn min_score<T: Real>(scores: &[T]) -> T {
    scores.iter().copied().fold(T::infinity(), T::min)
}

fn check_cell(ground: &GroundHeightMap, cell: (i64, i64)) -> Result<(usize, usize)> {
    let [nx, ny] = ground.layout.dims;
    if cell.0 < 0 || cell.1 < 0 || cell.0 as usize >= nx || cell.1 as usize >= ny {
        return Err(Error::OutOfBounds(cell.0, cell.1));
    }
    Ok((cell.0 as usize, cell.1 as usize))
}

/// The `n` voxels stacked upward from the voxel that contains the ground
/// surface at the cell center. Voxels above the grid top are returned as-is
/// and read as unobserved.
pub fn column_indices<T: Real>(
    ground: &GroundHeightMap,
    grid: &OccupancyGrid<T>,
    cell: (i64, i64),
    n: usize,
) -> Result<Vec<VoxelIndex>> {
    let (i, j) = check_cell(ground, cell)?;
    let spec = grid.spec();
    let c = ground.layout.center(i, j);
    let h = ground.height(i, j);
    let base = spec.index_of(&nalgebra::Point3::new(c.x, c.y, h));
    if !(0..2).all(|a| base[a] >= 0 && (base[a] as usize) < spec.dims[a]) {
        return Err(Error::OutOfBounds(cell.0, cell.1));
    }
    Ok((0..n as i64).map(|k| [base[0], base[1], base[2] + k]).collect())
}

fn weighted_mean<T: Real>(probs: impl Iterator<Item = T>, weights: &[T]) -> T {
    let total: T = weights.iter().copied().sum();
    probs.zip(weights).map(|(p, &w)| w * p).sum::<T>() / total
}

/// Obstruction score of one ground cell. Unobserved voxels count as 0.5.
pub fn obstruction_score<T: Real>(
    grid: &OccupancyGrid<T>,
    ground: &GroundHeightMap,
    cell: (i64, i64),
    weights: &[T],
    mode: ScoreMode,
) -> Result<T> {
    validate_weights(weights)?;
    let column = column_indices(ground, grid, cell, weights.len())?;
    let probs = column.iter().map(|&v| grid.probability_at(v));
    Ok(match mode {
        ScoreMode::WeightedMean => weighted_mean(probs, weights),
        ScoreMode::AnyOccupied => T::one() - probs.fold(T::one(), |acc, p| acc * (T::one() - p)),
    })
}

fn validate_weights<T: Real>(weights: &[T]) -> Result<()> {
    if weights.is_empty() || weights.iter().any(|w| !(*w > T::zero())) {
        return Err(Error::InvalidParam("column weights must be non-empty and strictly positive".into()));
    }
    Ok(())
}

/// Cell offsets whose centers lie within `radius` meters of the origin cell center.
pub fn footprint_offsets(radius: f64, cell_size: f64) -> Vec<(i64, i64)> {
    let r = (radius / cell_size).floor() as i64 + 1;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            let d = ((dx * dx + dy * dy) as f64).sqrt() * cell_size;
            if d <= radius {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Worst-case score over the circular footprint centered on `cell`.
/// Footprint cells outside the map count as fully obstructed.
pub fn footprint_score<T: Real>(map: &ObstructionMap<T>, cell: (i64, i64), radius: f64) -> T {
    footprint_offsets(radius, map.layout.cell_size)
        .into_iter()
        .map(|(dx, dy)| map.score(cell.0 + dx, cell.1 + dy))
        .fold(T::zero(), T::max)
}

/// Scores every ground cell. The ground layout must share the grid's XY
/// origin and resolution and fit inside its XY extent.
pub fn build_obstruction_map<T: Real>(
    grid: &OccupancyGrid<T>,
    ground: &GroundHeightMap,
    weights: &[T],
    mode: ScoreMode,
) -> Result<ObstructionMap<T>> {
    validate_weights(weights)?;
    let spec = grid.spec();
    let l = &ground.layout;
    let tol = 1e-9 * spec.voxel_size.max(1.0);
    if (l.origin.x - spec.origin.x).abs() > tol
        || (l.origin.y - spec.origin.y).abs() > tol
        || (l.cell_size - spec.voxel_size).abs() > tol
        || l.dims[0] > spec.dims[0]
        || l.dims[1] > spec.dims[1]
    {
        return Err(Error::Misaligned(format!(
            "ground origin ({}, {}) size {} dims {:?} vs grid origin ({}, {}) voxel {} dims {:?}",
            l.origin.x, l.origin.y, l.cell_size, l.dims, spec.origin.x, spec.origin.y, spec.voxel_size, spec.dims
        )));
    }
    let scores = (0..l.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = l.unindex(k);
            obstruction_score(grid, ground, (i as i64, j as i64), weights, mode)
        })
        .collect::<Result<Vec<T>>>()?;
    let b_min = min_score(&scores);
    Ok(ObstructionMap {
        layout: *l,
        scores,
        ground: ground.heights.clone(),
        n: weights.len(),
        weights: weights.to_vec(),
        b_min,
    })
}
