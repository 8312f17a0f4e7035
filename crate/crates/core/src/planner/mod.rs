//! Grid path planning over obstruction maps.
//!
//! Cells are `(x, y)` pairs on an 8-connected grid. Distances and edge
//! costs are in cell units: an axis step has length 1, a diagonal step √2.

mod dstar;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ground_filter::CellLayout;
use crate::obstruction::{footprint_score, ObstructionMap};
use crate::scalar::Real;

pub use self::dstar::DStarLite;

pub type Cell = (usize, usize);

pub const DEFAULT_B_CLAMP_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostMode<T> {
    /// `b C_obst + (1 - b) len`
    Expected { c_obst: T },
    /// `-ln(1 - b) len`
    LogReach,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel<T> {
    pub mode: CostMode<T>,
    pub b_clamp_eps: T,
    /// Moves into cells with `b_max >= 1 - b_clamp_eps` become impassable.
    #[serde(default)]
    pub lethal: bool,
    /// Forbid diagonal moves past a corner cell that is lethal-level obstructed.
    #[serde(default)]
    pub forbid_corner_cutting: bool,
}

impl<T: Real> CostModel<T> {
    pub fn expected(c_obst: T) -> Self {
        Self {
            mode: CostMode::Expected { c_obst },
            b_clamp_eps: T::lit(DEFAULT_B_CLAMP_EPS),
            lethal: false,
            forbid_corner_cutting: false,
        }
    }

    pub fn log_reach() -> Self {
        Self {
            mode: CostMode::LogReach,
            b_clamp_eps: T::lit(DEFAULT_B_CLAMP_EPS),
            lethal: false,
            forbid_corner_cutting: false,
        }
    }

    pub fn with_lethal(mut self, lethal: bool) -> Self {
        self.lethal = lethal;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let eps = self.b_clamp_eps;
        if !(eps > T::zero() && eps < T::lit(0.5)) {
            return Err(Error::InvalidParam(format!("b_clamp_eps {eps} outside (0, 0.5)")));
        }
        if let CostMode::Expected { c_obst } = self.mode {
            if !(c_obst >= T::SQRT_2()) || !c_obst.is_finite() {
                return Err(Error::InvalidParam(format!("C_obst {c_obst} must be finite and at least sqrt(2)")));
            }
        }
        Ok(())
    }

    pub fn is_lethal(&self, b: T) -> bool {
        self.lethal && b >= T::one() - self.b_clamp_eps
    }

    /// Cost of stepping `step_len` into a cell with footprint score `b_next`.
    pub fn edge_cost(&self, b_next: T, step_len: T) -> T {
        if self.is_lethal(b_next) {
            return T::infinity();
        }
        match self.mode {
            CostMode::Expected { c_obst } => expected_edge_cost(b_next, step_len, c_obst),
            CostMode::LogReach => log_reach_edge_cost(b_next, step_len, self.b_clamp_eps),
        }
    }

    /// Per-unit-distance heuristic weight for a session minimum score.
    pub fn heuristic_weight(&self, b_min: T) -> T {
        let b_min = b_min.max(T::zero());
        match self.mode {
            CostMode::Expected { .. } => T::one() - b_min,
            CostMode::LogReach => -(T::one() - b_min.min(T::one() - self.b_clamp_eps)).ln(),
        }
    }
}

/// `max(dx, dy) + (√2 - 1) min(dx, dy)`.
pub fn octile_distance<T: Real>(a: Cell, b: Cell) -> T {
    let dx = a.0.abs_diff(b.0);
    let dy = a.1.abs_diff(b.1);
    let (hi, lo) = (dx.max(dy), dx.min(dy));
    T::lit(hi as f64) + (T::SQRT_2() - T::one()) * T::lit(lo as f64)
}

pub fn expected_edge_cost<T: Real>(b_next: T, step_len: T, c_obst: T) -> T {
    b_next * c_obst + (T::one() - b_next) * step_len
}

pub fn log_reach_edge_cost<T: Real>(b_next: T, step_len: T, eps: T) -> T {
    let b = b_next.min(T::one() - eps);
    -(T::one() - b).ln() * step_len
}

pub fn heuristic<T: Real>(s0: Cell, s: Cell, b_min: T, model: &CostModel<T>) -> T {
    model.heuristic_weight(b_min) * octile_distance(s0, s)
}

pub fn step_length<T: Real>(a: Cell, b: Cell) -> T {
    if a.0 != b.0 && a.1 != b.1 {
        T::SQRT_2()
    } else {
        T::one()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path<T> {
    pub cells: Vec<Cell>,
    pub total_cost: T,
}

impl<T: Real> Path<T> {
    pub fn start(&self) -> Cell {
        self.cells[0]
    }

    pub fn goal(&self) -> Cell {
        *self.cells.last().expect("path is never empty")
    }

    /// Length in cell units.
    pub fn length(&self) -> T {
        self.cells.windows(2).map(|w| step_length::<T>(w[0], w[1])).sum()
    }

    pub fn is_connected(&self) -> bool {
        self.cells
            .windows(2)
            .all(|w| w[0] != w[1] && w[0].0.abs_diff(w[1].0) <= 1 && w[0].1.abs_diff(w[1].1) <= 1)
    }
}

/// Footprint scores for every cell of `map`.
pub fn footprint_map<T: Real>(map: &ObstructionMap<T>, footprint_radius: f64) -> Vec<T> {
    let l = map.layout();
    (0..l.len())
        .map(|k| {
            let (x, y) = l.unindex(k);
            footprint_score(map, (x as i64, y as i64), footprint_radius)
        })
        .collect()
}

/// Minimum-cost path from `start` to `goal`.
pub fn plan<T: Real>(
    map: &ObstructionMap<T>,
    footprint_radius: f64,
    start: Cell,
    goal: Cell,
    model: CostModel<T>,
) -> Result<Path<T>> {
    DStarLite::new(map, footprint_radius, start, goal, model)?.plan()
}

/// `Π (1 - b_max(s_{i+1}))^len_i` along the path.
pub fn path_reachability<T: Real>(path: &Path<T>, map: &ObstructionMap<T>, footprint_radius: f64) -> T {
    path.cells
        .windows(2)
        .map(|w| {
            let b = footprint_score(map, (w[1].0 as i64, w[1].1 as i64), footprint_radius);
            (T::one() - b).powf(step_length(w[0], w[1]))
        })
        .fold(T::one(), |acc, f| acc * f)
}

/// `ix,iy,world_x,world_y` rows, world coordinates at cell centers.
pub fn write_path_csv<T: Real, W: Write>(mut w: W, path: &Path<T>, layout: &CellLayout) -> Result<()> {
    writeln!(w, "ix,iy,world_x,world_y")?;
    for &(x, y) in &path.cells {
        let c = layout.center(x, y);
        writeln!(w, "{x},{y},{},{}", c.x, c.y)?;
    }
    Ok(())
}
