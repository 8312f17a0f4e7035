//! Cloth simulation over the Z-inverted point cloud.

use std::collections::VecDeque;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::CellLayout;
use crate::error::{Error, Result};

// Per-constraint displacement factors indexed by rigidness, as in the
// reference CSF implementation: one-sided moves when the neighbor is pinned,
// two-sided moves when both nodes are free.
const SINGLE_MOVE: [f64; 14] = [
    0.0, 0.3, 0.51, 0.657, 0.7599, 0.83193, 0.88235, 0.91765, 0.94235, 0.95965, 0.97175, 0.98023, 0.98616, 0.99031,
];
const DOUBLE_MOVE: [f64; 14] = [
    0.0, 0.3, 0.42, 0.468, 0.4872, 0.4949, 0.498, 0.4992, 0.4997, 0.4999, 0.4999, 0.5, 0.5, 0.5,
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClothParams {
    /// Number of constraint passes per gravity step (1..=13).
    pub rigidness: u32,
    /// Maximum distance above the cloth for a point to count as ground.
    pub height_threshold: f64,
    /// Node spacing; `None` uses the height-map cell size.
    pub cloth_resolution: Option<f64>,
    pub gravity_step: f64,
    pub max_iterations: usize,
    pub convergence_eps: f64,
}

impl Default for ClothParams {
    fn default() -> Self {
        Self {
            rigidness: 3,
            height_threshold: 0.20,
            cloth_resolution: None,
            gravity_step: 0.1,
            max_iterations: 500,
            convergence_eps: 0.005,
        }
    }
}

impl ClothParams {
    pub fn validate(&self) -> Result<()> {
        if !(1..=13).contains(&self.rigidness) {
            return Err(Error::InvalidParam(format!("rigidness {} outside 1..=13", self.rigidness)));
        }
        if !(self.height_threshold > 0.0) {
            return Err(Error::InvalidParam("height threshold must be > 0".into()));
        }
        if !(self.gravity_step > 0.0) || !(self.convergence_eps > 0.0) {
            return Err(Error::InvalidParam("gravity step and convergence eps must be > 0".into()));
        }
        if let Some(r) = self.cloth_resolution {
            if !(r > 0.0) {
                return Err(Error::InvalidParam("cloth resolution must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Relaxed cloth, reported in the original (un-inverted) frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ClothSurface {
    /// Node `(i, j)` sits at the center of cell `(i, j)` of this layout.
    pub layout: CellLayout,
    pub heights: Vec<f64>,
    pub iterations: usize,
}

impl ClothSurface {
    pub fn node(&self, i: usize, j: usize) -> f64 {
        self.heights[self.layout.index(i, j)]
    }

    /// Bilinear interpolation between node centers, clamped at the border.
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        let [nx, ny] = self.layout.dims;
        let fx = ((x - self.layout.origin.x) / self.layout.cell_size - 0.5).clamp(0.0, (nx - 1) as f64);
        let fy = ((y - self.layout.origin.y) / self.layout.cell_size - 0.5).clamp(0.0, (ny - 1) as f64);
        let (i0, j0) = (fx.floor() as usize, fy.floor() as usize);
        let (i1, j1) = ((i0 + 1).min(nx - 1), (j0 + 1).min(ny - 1));
        let (tx, ty) = (fx - i0 as f64, fy - j0 as f64);
        let a = self.node(i0, j0) * (1.0 - tx) + self.node(i1, j0) * tx;
        let b = self.node(i0, j1) * (1.0 - tx) + self.node(i1, j1) * tx;
        a * (1.0 - ty) + b * ty
    }
}

/// Collision height per node in the inverted frame: the highest inverted
/// point in the node's cell. Empty nodes take the mean of already filled
/// 4-neighbors, filling outward in breadth-first layers.
fn collision_heights(points: &[Vector3<f64>], layout: &CellLayout) -> Vec<f64> {
    let n = layout.len();
    let mut c = vec![f64::NEG_INFINITY; n];
    for p in points {
        if let Some((i, j)) = layout.cell_of(p.x, p.y) {
            let k = layout.index(i, j);
            c[k] = c[k].max(-p.z);
        }
    }
    let mut filled: Vec<bool> = c.iter().map(|v| v.is_finite()).collect();
    let mut frontier: VecDeque<usize> = (0..n).filter(|&k| filled[k]).collect();
    while !frontier.is_empty() {
        let mut next: Vec<usize> = Vec::new();
        for k in frontier.drain(..) {
            for nb in layout.neighbors4(k) {
                if !filled[nb] && !next.contains(&nb) {
                    next.push(nb);
                }
            }
        }
        next.sort_unstable();
        let values: Vec<f64> = next
            .iter()
            .map(|&k| {
                let (s, cnt) = layout
                    .neighbors4(k)
                    .filter(|&nb| filled[nb])
                    .fold((0.0, 0usize), |(s, cnt), nb| (s + c[nb], cnt + 1));
                s / cnt as f64
            })
            .collect();
        for (&k, v) in next.iter().zip(values) {
            c[k] = v;
            filled[k] = true;
        }
        frontier.extend(next);
    }
    c
}

/// Drops a cloth onto the Z-inverted cloud and relaxes it. Nodes fall by
/// `gravity_step` per iteration, stick when they reach the surface, and are
/// pulled toward neighbors by `rigidness` constraint passes. Stops when no
/// node moves more than `convergence_eps` in an iteration.
pub fn simulate_cloth(points: &[Vector3<f64>], params: &ClothParams, layout: &CellLayout) -> Result<ClothSurface> {
    params.validate()?;
    if points.is_empty() {
        return Err(Error::InvalidParam("cloth simulation needs at least one point".into()));
    }
    let layout = match params.cloth_resolution {
        Some(r) if r != layout.cell_size => layout.resampled(r),
        _ => *layout,
    };
    let collide = collision_heights(points, &layout);
    let n = layout.len();
    let top = collide.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut h = vec![top + params.gravity_step; n];
    let mut pinned = vec![false; n];
    let single = SINGLE_MOVE[params.rigidness as usize];
    let double = DOUBLE_MOVE[params.rigidness as usize];
    let edges = layout.edges4();

    let mut iterations = 0;
    for _ in 0..params.max_iterations {
        iterations += 1;
        let before = h.clone();
        for k in 0..n {
            if !pinned[k] {
                h[k] -= params.gravity_step;
                if h[k] <= collide[k] {
                    h[k] = collide[k];
                    pinned[k] = true;
                }
            }
        }
        for _ in 0..params.rigidness {
            for &(a, b) in &edges {
                let d = h[b] - h[a];
                match (pinned[a], pinned[b]) {
                    (false, false) => {
                        h[a] += d * double;
                        h[b] -= d * double;
                    }
                    (false, true) => h[a] += d * single,
                    (true, false) => h[b] -= d * single,
                    (true, true) => {}
                }
            }
        }
        for k in 0..n {
            if !pinned[k] && h[k] <= collide[k] {
                h[k] = collide[k];
                pinned[k] = true;
            }
        }
        let moved = h.iter().zip(&before).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if moved < params.convergence_eps {
            break;
        }
    }
    Ok(ClothSurface {
        layout,
        heights: h.into_iter().map(|v| -v).collect(),
        iterations,
    })
}
