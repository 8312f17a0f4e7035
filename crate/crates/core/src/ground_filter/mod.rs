//! Ground segmentation by cloth simulation and the gridded ground-height map.

mod cloth;
mod io;

pub use self::cloth::{simulate_cloth, ClothParams, ClothSurface};
pub use self::io::{read_ground_csv, write_ground_csv, write_ground_pgm, PGM_SCALE};

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regular 2D cell lattice: min corner, square cell edge, cell counts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellLayout {
    pub origin: Vector2<f64>,
    pub cell_size: f64,
    pub dims: [usize; 2],
}

impl CellLayout {
    pub fn new(origin: Vector2<f64>, cell_size: f64, dims: [usize; 2]) -> Result<Self> {
        if !(cell_size > 0.0) || dims[0] == 0 || dims[1] == 0 {
            return Err(Error::InvalidParam(format!(
                "invalid cell layout: size {cell_size}, dims {dims:?}"
            )));
        }
        Ok(Self {
            origin,
            cell_size,
            dims,
        })
    }

    /// Cells covering the XY bounding box of `points`, anchored at its min corner.
    pub fn covering(points: &[Vector3<f64>], cell_size: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParam("no points".into()));
        }
        let (mut lo, mut hi) = (Vector2::repeat(f64::INFINITY), Vector2::repeat(f64::NEG_INFINITY));
        for p in points {
            lo = lo.inf(&p.xy());
            hi = hi.sup(&p.xy());
        }
        let dims = [0, 1].map(|a| ((hi[a] - lo[a]) / cell_size).floor() as usize + 1);
        Self::new(lo, cell_size, dims)
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.dims[0] * j
    }

    pub fn unindex(&self, k: usize) -> (usize, usize) {
        (k % self.dims[0], k / self.dims[0])
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = ((x - self.origin.x) / self.cell_size).floor();
        let fy = ((y - self.origin.y) / self.cell_size).floor();
        (fx >= 0.0 && fy >= 0.0 && (fx as usize) < self.dims[0] && (fy as usize) < self.dims[1])
            .then_some((fx as usize, fy as usize))
    }

    pub fn center(&self, i: usize, j: usize) -> Vector2<f64> {
        self.origin + Vector2::new(i as f64 + 0.5, j as f64 + 0.5) * self.cell_size
    }

    pub(crate) fn neighbors4(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = self.unindex(k);
        let [nx, ny] = self.dims;
        [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)]
            .into_iter()
            .filter_map(move |(di, dj)| {
                let (a, b) = (i as i64 + di, j as i64 + dj);
                (a >= 0 && b >= 0 && (a as usize) < nx && (b as usize) < ny).then(|| self.index(a as usize, b as usize))
            })
    }

    pub(crate) fn edges4(&self) -> Vec<(usize, usize)> {
        let [nx, ny] = self.dims;
        let mut e = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                if i + 1 < nx {
                    e.push((self.index(i, j), self.index(i + 1, j)));
                }
                if j + 1 < ny {
                    e.push((self.index(i, j), self.index(i, j + 1)));
                }
            }
        }
        e
    }

    /// Same extent with a different cell size.
    pub fn resampled(&self, cell_size: f64) -> Self {
        let extent = [0, 1].map(|a| self.dims[a] as f64 * self.cell_size);
        Self {
            origin: self.origin,
            cell_size,
            dims: extent.map(|e| ((e / cell_size).ceil() as usize).max(1)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeightSource {
    /// Lowest ground point in the cell.
    Measured,
    /// No ground point; height taken from the cloth node.
    Virtual,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundHeightMap {
    pub layout: CellLayout,
    pub heights: Vec<f64>,
    pub source: Vec<HeightSource>,
}

impl GroundHeightMap {
    pub fn new(layout: CellLayout, heights: Vec<f64>, source: Vec<HeightSource>) -> Result<Self> {
        if heights.len() != layout.len() || source.len() != layout.len() {
            return Err(Error::InvalidParam("ground map arrays do not match layout".into()));
        }
        Ok(Self {
            layout,
            heights,
            source,
        })
    }

    /// Flat ground at `height` everywhere.
    pub fn flat(layout: CellLayout, height: f64) -> Self {
        Self {
            layout,
            heights: vec![height; layout.len()],
            source: vec![HeightSource::Measured; layout.len()],
        }
    }

    pub fn height(&self, i: usize, j: usize) -> f64 {
        self.heights[self.layout.index(i, j)]
    }

    pub fn cell_size(&self) -> f64 {
        self.layout.cell_size
    }
}

/// Splits points into ground and non-ground and grids the ground heights.
///
/// A point is ground when it lies less than `height_threshold` above the
/// relaxed cloth (points below the cloth count as on it). Each cell takes the
/// lowest ground point; cells without one use the cloth node at the cell
/// center.
pub fn segment_ground(
    points: &[Vector3<f64>],
    params: &ClothParams,
) -> Result<(Vec<Vector3<f64>>, GroundHeightMap)> {
    let layout = CellLayout::covering(points, params.cloth_resolution.unwrap_or(0.25))?;
    segment_ground_on(points, params, &layout)
}

/// [`segment_ground`] on a caller-supplied cell layout, e.g. one aligned
/// with an occupancy grid. Points outside the layout are ignored.
pub fn segment_ground_on(
    points: &[Vector3<f64>],
    params: &ClothParams,
    layout: &CellLayout,
) -> Result<(Vec<Vector3<f64>>, GroundHeightMap)> {
    let inside: Vec<Vector3<f64>> = points
        .iter()
        .filter(|p| layout.cell_of(p.x, p.y).is_some())
        .copied()
        .collect();
    let cloth_params = ClothParams {
        cloth_resolution: Some(params.cloth_resolution.unwrap_or(layout.cell_size)),
        ..*params
    };
    let cloth = simulate_cloth(&inside, &cloth_params, layout)?;
    let ground: Vec<Vector3<f64>> = inside
        .into_iter()
        .filter(|p| p.z - cloth.height_at(p.x, p.y) < params.height_threshold)
        .collect();

    let mut heights = vec![f64::INFINITY; layout.len()];
    for p in &ground {
        let (i, j) = layout.cell_of(p.x, p.y).expect("filtered to layout");
        let k = layout.index(i, j);
        heights[k] = heights[k].min(p.z);
    }
    let mut source = vec![HeightSource::Measured; layout.len()];
    for k in 0..layout.len() {
        if !heights[k].is_finite() {
            let (i, j) = layout.unindex(k);
            let c = layout.center(i, j);
            heights[k] = cloth.height_at(c.x, c.y);
            source[k] = HeightSource::Virtual;
        }
    }
    Ok((ground, GroundHeightMap::new(*layout, heights, source)?))
}
