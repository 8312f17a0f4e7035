//! Incremental backward search (D* Lite) on the 8-connected cell grid.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{footprint_map, octile_distance, step_length, Cell, CostModel, Path};
use crate::error::{Error, Result};
use crate::obstruction::{footprint_offsets, ObstructionMap};
use crate::scalar::Real;

const NEIGHBORS: [(i64, i64); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

#[derive(Debug, Clone, Copy)]
struct Entry<T> {
    k1: T,
    k2: T,
    idx: usize,
    x: usize,
    y: usize,
    stamp: u32,
}

impl<T: Real> Entry<T> {
    fn order(&self, o: &Self) -> Ordering {
        cmp(self.k1, o.k1)
            .then(cmp(self.k2, o.k2))
            .then(self.y.cmp(&o.y))
            .then(self.x.cmp(&o.x))
    }
}

fn cmp<T: Real>(a: T, b: T) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

impl<T: Real> PartialEq for Entry<T> {
    fn eq(&self, o: &Self) -> bool {
        self.order(o) == Ordering::Equal
    }
}

impl<T: Real> Eq for Entry<T> {}

impl<T: Real> PartialOrd for Entry<T> {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

// Reversed so that `BinaryHeap` pops the smallest key.
impl<T: Real> Ord for Entry<T> {
    fn cmp(&self, o: &Self) -> Ordering {
        o.order(self)
    }
}

/// Planner state: obstruction scores, footprint maxima, `g`/`rhs` values,
/// the priority queue and the `k_m` offset.
#[derive(Debug, Clone)]
pub struct DStarLite<T> {
    model: CostModel<T>,
    dims: [usize; 2],
    radius: f64,
    offsets: Vec<(i64, i64)>,
    scores: Vec<T>,
    b_max: Vec<T>,
    b_min: T,
    h_weight: T,
    g: Vec<T>,
    rhs: Vec<T>,
    stamp: Vec<u32>,
    queued: Vec<bool>,
    heap: BinaryHeap<Entry<T>>,
    k_m: T,
    start: Cell,
    last: Cell,
    goal: Cell,
    expansions: usize,
    resets: usize,
    map: ObstructionMap<T>,
}

impl<T: Real> DStarLite<T> {
    pub fn new(map: &ObstructionMap<T>, footprint_radius: f64, start: Cell, goal: Cell, model: CostModel<T>) -> Result<Self> {
        model.validate()?;
        if !(footprint_radius >= 0.0) {
            return Err(Error::InvalidParam(format!("footprint radius {footprint_radius} must be non-negative")));
        }
        let dims = map.dims();
        for c in [start, goal] {
            if c.0 >= dims[0] || c.1 >= dims[1] {
                return Err(Error::OutOfBounds(c.0 as i64, c.1 as i64));
            }
        }
        let mut s = Self {
            model,
            dims,
            radius: footprint_radius,
            offsets: footprint_offsets(footprint_radius, map.layout().cell_size),
            scores: map.scores().to_vec(),
            b_max: Vec::new(),
            b_min: T::zero(),
            h_weight: T::zero(),
            g: Vec::new(),
            rhs: Vec::new(),
            stamp: Vec::new(),
            queued: Vec::new(),
            heap: BinaryHeap::new(),
            k_m: T::zero(),
            start,
            last: start,
            goal,
            expansions: 0,
            resets: 0,
            map: map.clone(),
        };
        s.initialize();
        Ok(s)
    }

    fn initialize(&mut self) {
        let n = self.dims[0] * self.dims[1];
        self.b_max = footprint_map(&self.map, self.radius);
        self.b_min = self.scores.iter().copied().fold(T::infinity(), T::min).min(self.model.b_clamp_eps);
        self.h_weight = self.model.heuristic_weight(self.b_min);
        self.g = vec![T::infinity(); n];
        self.rhs = vec![T::infinity(); n];
        self.stamp = vec![0; n];
        self.queued = vec![false; n];
        self.heap.clear();
        self.k_m = T::zero();
        self.last = self.start;
        let gi = self.index(self.goal);
        self.rhs[gi] = T::zero();
        self.push(self.goal);
    }

    pub fn model(&self) -> &CostModel<T> {
        &self.model
    }

    pub fn map(&self) -> &ObstructionMap<T> {
        &self.map
    }

    pub fn b_max(&self) -> &[T] {
        &self.b_max
    }

    /// Minimum score used by the heuristic during this session.
    pub fn session_b_min(&self) -> T {
        self.b_min
    }

    pub fn start(&self) -> Cell {
        self.start
    }

    pub fn goal(&self) -> Cell {
        self.goal
    }

    /// Cost-to-goal estimate of a cell after the last search.
    pub fn g(&self, c: Cell) -> T {
        self.g[self.index(c)]
    }

    /// One-step lookahead cost-to-goal; equals the optimum at the start after a search.
    pub fn rhs(&self, c: Cell) -> T {
        self.rhs[self.index(c)]
    }

    pub fn expansions(&self) -> usize {
        self.expansions
    }

    pub fn resets(&self) -> usize {
        self.resets
    }

    pub fn plan(&mut self) -> Result<Path<T>> {
        self.compute_shortest_path();
        self.extract_path()
    }

    /// Applies `(cell, new b)` changes, moves the start and repairs the plan.
    pub fn update_and_replan(&mut self, changes: &[(Cell, T)], new_start: Cell) -> Result<Path<T>> {
        if new_start.0 >= self.dims[0] || new_start.1 >= self.dims[1] {
            return Err(Error::OutOfBounds(new_start.0 as i64, new_start.1 as i64));
        }
        self.start = new_start;
        let mut touched = Vec::new();
        let mut reset = false;
        for &(c, b) in changes {
            if c.0 >= self.dims[0] || c.1 >= self.dims[1] {
                return Err(Error::OutOfBounds(c.0 as i64, c.1 as i64));
            }
            let i = self.index(c);
            if self.scores[i] == b {
                continue;
            }
            self.scores[i] = b;
            self.map.set_score(c.0, c.1, b);
            reset |= b < self.b_min;
            touched.push(c);
        }
        if reset {
            self.resets += 1;
            self.initialize();
            return self.plan();
        }
        if !touched.is_empty() {
            self.k_m = self.k_m + self.h(self.last, self.start);
            self.last = self.start;
            let mut changed = Vec::new();
            for c in touched {
                for &(dx, dy) in &self.offsets {
                    let Some(v) = self.offset(c, dx, dy) else { continue };
                    let vi = self.index(v);
                    let b = self.footprint(v);
                    if b != self.b_max[vi] {
                        self.b_max[vi] = b;
                        changed.push(v);
                    }
                }
            }
            for v in changed {
                let preds: Vec<Cell> = self.neighbors(v).collect();
                for u in preds {
                    self.update_vertex(u);
                }
            }
        }
        self.plan()
    }

    fn footprint(&self, c: Cell) -> T {
        self.offsets
            .iter()
            .map(|&(dx, dy)| match self.offset(c, dx, dy) {
                Some(v) => self.scores[self.index(v)],
                None => T::one(),
            })
            .fold(T::zero(), T::max)
    }

    fn index(&self, c: Cell) -> usize {
        c.0 + self.dims[0] * c.1
    }

    fn offset(&self, c: Cell, dx: i64, dy: i64) -> Option<Cell> {
        let x = c.0 as i64 + dx;
        let y = c.1 as i64 + dy;
        (x >= 0 && y >= 0 && (x as usize) < self.dims[0] && (y as usize) < self.dims[1]).then_some((x as usize, y as usize))
    }

    fn neighbors(&self, c: Cell) -> impl Iterator<Item = Cell> + '_ {
        NEIGHBORS.iter().filter_map(move |&(dx, dy)| self.offset(c, dx, dy))
    }

    fn h(&self, a: Cell, b: Cell) -> T {
        self.h_weight * octile_distance(a, b)
    }

    /// Cost of the move `u -> v` between 8-adjacent cells.
    pub fn edge_cost(&self, u: Cell, v: Cell) -> T {
        if self.model.forbid_corner_cutting && u.0 != v.0 && u.1 != v.1 {
            let blocked = |c: Cell| self.b_max[self.index(c)] >= T::one() - self.model.b_clamp_eps;
            if blocked((u.0, v.1)) || blocked((v.0, u.1)) {
                return T::infinity();
            }
        }
        self.model.edge_cost(self.b_max[self.index(v)], step_length(u, v))
    }

    fn key(&self, c: Cell) -> (T, T) {
        let i = self.index(c);
        let m = self.g[i].min(self.rhs[i]);
        (m + self.h(self.start, c) + self.k_m, m)
    }

    fn push(&mut self, c: Cell) {
        let i = self.index(c);
        let (k1, k2) = self.key(c);
        self.stamp[i] = self.stamp[i].wrapping_add(1);
        self.queued[i] = true;
        self.heap.push(Entry { k1, k2, idx: i, x: c.0, y: c.1, stamp: self.stamp[i] });
    }

    fn remove(&mut self, c: Cell) {
        let i = self.index(c);
        self.queued[i] = false;
    }

    fn top(&mut self) -> Option<Entry<T>> {
        while let Some(e) = self.heap.peek() {
            if self.queued[e.idx] && self.stamp[e.idx] == e.stamp {
                return Some(*e);
            }
            self.heap.pop();
        }
        None
    }

    fn update_vertex(&mut self, u: Cell) {
        let ui = self.index(u);
        if u != self.goal {
            let best = self
                .neighbors(u)
                .map(|s| self.edge_cost(u, s) + self.g[self.index(s)])
                .fold(T::infinity(), T::min);
            self.rhs[ui] = best;
        }
        if self.g[ui] != self.rhs[ui] {
            self.push(u);
        } else {
            self.remove(u);
        }
    }

    fn compute_shortest_path(&mut self) {
        loop {
            let Some(top) = self.top() else { break };
            let si = self.index(self.start);
            let start_key = self.key(self.start);
            let top_key = (top.k1, top.k2);
            if !key_within(top_key, start_key) && self.rhs[si] == self.g[si] {
                break;
            }
            let u = (top.x, top.y);
            let ui = top.idx;
            let new_key = self.key(u);
            self.expansions += 1;
            if lex_less(top_key, new_key) == Ordering::Less {
                self.push(u);
            } else if self.g[ui] > self.rhs[ui] {
                self.g[ui] = self.rhs[ui];
                self.remove(u);
                let preds: Vec<Cell> = self.neighbors(u).collect();
                for s in preds {
                    self.update_vertex(s);
                }
            } else {
                self.g[ui] = T::infinity();
                let preds: Vec<Cell> = self.neighbors(u).collect();
                self.update_vertex(u);
                for s in preds {
                    self.update_vertex(s);
                }
            }
        }
    }

    /// Greedy descent on `c + g` from the start. Ties prefer cells closer to
    /// the goal, then lower `(y, x)`.
    fn extract_path(&self) -> Result<Path<T>> {
        if !self.rhs[self.index(self.start)].is_finite() {
            return Err(Error::Unreachable);
        }
        let n = self.dims[0] * self.dims[1];
        let mut visited = vec![false; n];
        let mut cells = vec![self.start];
        let mut total = T::zero();
        let mut cur = self.start;
        visited[self.index(cur)] = true;
        while cur != self.goal {
            let mut best: Option<(T, T, Cell)> = None;
            for s in self.neighbors(cur) {
                if visited[self.index(s)] {
                    continue;
                }
                let c = self.edge_cost(cur, s);
                let v = c + self.g(s);
                if !v.is_finite() {
                    continue;
                }
                let d = octile_distance::<T>(s, self.goal);
                let better = match best {
                    None => true,
                    Some((bv, bd, bc)) => cmp(v, bv)
                        .then(cmp(d, bd))
                        .then((s.1, s.0).cmp(&(bc.1, bc.0)))
                        == Ordering::Less,
                };
                if better {
                    best = Some((v, d, s));
                }
            }
            let Some((_, _, next)) = best else {
                return Err(Error::Unreachable);
            };
            total = total + self.edge_cost(cur, next);
            visited[self.index(next)] = true;
            cells.push(next);
            cur = next;
        }
        Ok(Path { cells, total_cost: total })
    }
}

/// Whether `a` may still precede `b`. Only the first components are
/// compared, with a relative tolerance: on plateaus of near-exact heuristics
/// many keys tie in `k1` up to rounding, and their `k2` order cannot be
/// trusted. Expanding extra vertices never breaks correctness.
fn key_within<T: Real>(a: (T, T), b: (T, T)) -> bool {
    a.0 <= b.0 + T::lit(1e-12) * b.0.abs().max(T::one())
}

fn lex_less<T: Real>(a: (T, T), b: (T, T)) -> Ordering {
    cmp(a.0, b.0).then(cmp(a.1, b.1))
}
