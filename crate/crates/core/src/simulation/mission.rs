//! Ground missions with local sensing and D* Lite replanning.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::truth::TraversabilityMask;
use super::world::World;
use crate::error::{Error, Result};
use crate::ground_filter::CellLayout;
use crate::obstruction::{ObstructionMap, DEFAULT_FOOTPRINT_RADIUS};
use crate::planner::{octile_distance, step_length, Cell, CostModel, DStarLite, Path};
use crate::rng::rng;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissionConfig {
    /// Sensing radius around the robot, meters.
    pub local_radius: f64,
    pub footprint_radius: f64,
    /// Step budget as a multiple of the start-goal octile distance.
    pub budget_factor: f64,
    /// Height above ground an obstacle must reach into to block a cell.
    pub clearance: f64,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            local_radius: 5.0,
            footprint_radius: DEFAULT_FOOTPRINT_RADIUS,
            budget_factor: 20.0,
            clearance: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MissionResult {
    pub cells: Vec<Cell>,
    /// Executed length in meters.
    pub length: f64,
    pub replans: usize,
    pub success: bool,
    /// Straight-line distance from the final cell to the goal, meters.
    pub goal_distance: f64,
}

/// Runs one mission against the analytic world.
pub fn run_mission<T: Real>(
    world: &World,
    layout: &CellLayout,
    prior: Option<&ObstructionMap<T>>,
    start: Cell,
    goal: Cell,
    model: CostModel<T>,
    cfg: &MissionConfig,
) -> Result<MissionResult> {
    let mask = TraversabilityMask::from_world(world, layout, cfg.clearance);
    run_mission_on(&mask, prior, start, goal, model, cfg)
}

/// Mission loop on a precomputed traversability mask.
///
/// Each tick the robot senses every cell within `local_radius`: free cells
/// get `b = eps`, blocked cells `b = 1 - eps` with `eps` the model's clamp.
/// It then replans on the combined map (the prior with all sensed cells
/// written in) and moves one cell. Without a prior the map starts at a
/// uniform `eps`, which makes the first plan the straight line. Sensed
/// obstacles are impassable: the model is run with `lethal` set.
pub fn run_mission_on<T: Real>(
    mask: &TraversabilityMask,
    prior: Option<&ObstructionMap<T>>,
    start: Cell,
    goal: Cell,
    model: CostModel<T>,
    cfg: &MissionConfig,
) -> Result<MissionResult> {
    let layout = mask.layout;
    let eps = model.b_clamp_eps;
    let model = model.with_lethal(true);
    let mut map = match prior {
        Some(p) => {
            if p.dims() != layout.dims {
                return Err(Error::Misaligned(format!("prior {:?} vs mask {:?}", p.dims(), layout.dims)));
            }
            p.clone()
        }
        None => ObstructionMap::uniform(layout, eps)?,
    };
    for c in [start, goal] {
        if c.0 >= layout.dims[0] || c.1 >= layout.dims[1] {
            return Err(Error::OutOfBounds(c.0 as i64, c.1 as i64));
        }
    }
    let sense_offsets = disc_offsets(cfg.local_radius / layout.cell_size);
    let free = eps;
    let blocked = T::one() - eps;
    let sense = |map: &ObstructionMap<T>, at: Cell| -> Vec<(Cell, T)> {
        let mut out = Vec::new();
        for &(dx, dy) in &sense_offsets {
            let (x, y) = (at.0 as i64 + dx, at.1 as i64 + dy);
            if !map.in_bounds(x, y) {
                continue;
            }
            let c = (x as usize, y as usize);
            let b = if mask.is_blocked(c) { blocked } else { free };
            if map.score(x, y) != b {
                out.push((c, b));
            }
        }
        out
    };

    let budget = (cfg.budget_factor * octile_distance::<f64>(start, goal)).ceil() as usize;
    let mut cells = vec![start];
    let mut length = 0.0;
    let mut replans = 0;
    let mut cur = start;

    for (c, b) in sense(&map, cur) {
        map.set_score(c.0, c.1, b);
    }
    let mut planner = DStarLite::new(&map, cfg.footprint_radius, start, goal, model)?;
    let mut path: Option<Path<T>> = planner.plan().ok();
    let mut success = cur == goal;

    while !success && path.is_some() && cells.len() <= budget {
        let next = path.as_ref().expect("checked").cells[1];
        length += step_length::<f64>(cur, next) * layout.cell_size;
        cur = next;
        cells.push(cur);
        if cur == goal {
            success = true;
            break;
        }
        let changes = sense(&map, cur);
        for &(c, b) in &changes {
            map.set_score(c.0, c.1, b);
        }
        let previous = path.take().expect("checked");
        match planner.update_and_replan(&changes, cur) {
            Ok(p) => {
                if p.cells[..] != previous.cells[1..] {
                    replans += 1;
                }
                path = Some(p);
            }
            Err(Error::Unreachable) => path = None,
            Err(e) => return Err(e),
        }
    }

    let goal_distance = (mask.center(cur) - mask.center(goal)).norm();
    Ok(MissionResult {
        cells,
        length,
        replans,
        success,
        goal_distance,
    })
}

/// Offsets `(dx, dy)` with `dx² + dy² <= r²`, row-major.
fn disc_offsets(r: f64) -> Vec<(i64, i64)> {
    let n = r.floor() as i64;
    let mut out = Vec::new();
    for dy in -n..=n {
        for dx in -n..=n {
            if ((dx * dx + dy * dy) as f64) <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Random start/goal pairs on cells clear for the footprint, at least
/// `min_separation` meters apart.
pub fn sample_mission_pairs(
    mask: &TraversabilityMask,
    n: usize,
    min_separation: f64,
    footprint_radius: f64,
    seed: u64,
) -> Result<Vec<(Cell, Cell)>> {
    let clear: Vec<Cell> = (0..mask.layout.len())
        .map(|k| mask.layout.unindex(k))
        .filter(|&c| mask.is_clear(c, footprint_radius))
        .collect();
    if clear.len() < 2 {
        return Err(Error::InvalidParam("not enough free cells for mission pairs".into()));
    }
    let mut r = rng(seed);
    let mut pairs = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while pairs.len() < n {
        attempts += 1;
        if attempts > 1000 * n.max(1) {
            return Err(Error::InvalidParam(format!("could not place {n} pairs {min_separation} m apart")));
        }
        let a = clear[r.random_range(0..clear.len())];
        let b = clear[r.random_range(0..clear.len())];
        if (mask.center(a) - mask.center(b)).norm() >= min_separation {
            pairs.push((a, b));
        }
    }
    Ok(pairs)
}

/// One row of the mission ledger.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub run_id: String,
    pub mode: String,
    pub cost: String,
    pub length: f64,
    pub replans: usize,
    pub success: bool,
}

pub const LEDGER_HEADER: &str = "run_id,mode,cost,length,replans,success";

/// Writes rows without a header, for appending to an existing ledger.
pub fn write_ledger_rows<W: Write>(mut w: W, rows: &[LedgerRow]) -> Result<()> {
    for r in rows {
        writeln!(w, "{},{},{},{},{},{}", r.run_id, r.mode, r.cost, r.length, r.replans, r.success)?;
    }
    Ok(())
}

pub fn write_ledger<W: Write>(mut w: W, rows: &[LedgerRow]) -> Result<()> {
    writeln!(w, "{LEDGER_HEADER}")?;
    write_ledger_rows(w, rows)
}

#[cfg(test)]
mod tests {
    use nalgebra::Vector2;

    use super::*;
    use crate::simulation::world::{Primitive, Terrain};

    fn layout(n: usize) -> CellLayout {
        CellLayout::new(Vector2::zeros(), 0.25, [n, n]).unwrap()
    }

    /// Wall along x = 10 across the whole world except a gap at y in [14, 16].
    fn wall_world() -> World {
        let obs = vec![
            Primitive::Box { center: [10.0, 7.0, 0.5], half_extents: [0.25, 7.0, 0.5], yaw: 0.0 },
            Primitive::Box { center: [10.0, 18.0, 0.5], half_extents: [0.25, 2.0, 0.5], yaw: 0.0 },
        ];
        World::new([20.0, 20.0], Terrain::Flat { height: 0.0 }, obs, 0)
    }

    fn prior_from_mask(mask: &TraversabilityMask, blocked: f64, free: f64) -> ObstructionMap<f64> {
        let b = mask.blocked.iter().map(|&x| if x { blocked } else { free }).collect();
        ObstructionMap::from_scores(mask.layout, b, vec![0.0; mask.layout.len()]).unwrap()
    }

    fn check_executed(mask: &TraversabilityMask, r: &MissionResult) {
        let p = Path { cells: r.cells.clone(), total_cost: 0.0 };
        assert!(p.is_connected());
        assert!(r.cells.iter().all(|&c| !mask.is_blocked(c)));
        assert!((p.length() * mask.layout.cell_size - r.length).abs() < 1e-9);
    }

    #[test]
    fn empty_world_is_straight_for_both() {
        let world = World::new([20.0, 20.0], Terrain::Flat { height: 0.0 }, vec![], 0);
        let mask = TraversabilityMask::from_world(&world, &layout(80), 1.0);
        let cfg = MissionConfig::default();
        let prior = prior_from_mask(&mask, 0.9, 0.05);
        for model in [CostModel::log_reach(), CostModel::expected(5.0)] {
            let a = run_mission_on(&mask, Some(&prior), (10, 10), (70, 40), model, &cfg).unwrap();
            let b = run_mission_on::<f64>(&mask, None, (10, 10), (70, 40), model, &cfg).unwrap();
            assert!(a.success && b.success);
            assert!((a.length - b.length).abs() < 1e-9);
            let straight = octile_distance::<f64>((10, 10), (70, 40)) * 0.25;
            assert!((b.length - straight).abs() < 1e-9);
            assert_eq!(b.replans, 0);
            check_executed(&mask, &a);
        }
    }

    #[test]
    fn wall_with_gap_prior_vs_naive() {
        let world = wall_world();
        let mask = TraversabilityMask::from_world(&world, &layout(80), 1.0);
        let cfg = MissionConfig::default();
        let prior = prior_from_mask(&mask, 1.0 - 1e-6, 1e-6);
        let (s, g) = ((8, 20), (72, 20));
        let ours = run_mission_on(&mask, Some(&prior), s, g, CostModel::log_reach(), &cfg).unwrap();
        let naive = run_mission_on::<f64>(&mask, None, s, g, CostModel::log_reach(), &cfg).unwrap();
        assert!(ours.success && naive.success);
        assert_eq!(ours.replans, 0);
        assert!(naive.replans >= 1);
        assert!(ours.length <= naive.length + 1e-9);
        check_executed(&mask, &ours);
        check_executed(&mask, &naive);
    }

    #[test]
    fn dead_end_prior_not_longer() {
        // A U-shaped pocket opening toward the start.
        let obs = vec![
            Primitive::Box { center: [12.0, 10.0, 0.5], half_extents: [0.25, 5.0, 0.5], yaw: 0.0 },
            Primitive::Box { center: [9.0, 15.0, 0.5], half_extents: [3.0, 0.25, 0.5], yaw: 0.0 },
            Primitive::Box { center: [9.0, 5.0, 0.5], half_extents: [3.0, 0.25, 0.5], yaw: 0.0 },
        ];
        let world = World::new([20.0, 20.0], Terrain::Flat { height: 0.0 }, obs, 0);
        let mask = TraversabilityMask::from_world(&world, &layout(80), 1.0);
        let prior = prior_from_mask(&mask, 0.9, 0.05);
        let cfg = MissionConfig { local_radius: 2.0, ..Default::default() };
        let (s, g) = ((4, 40), (76, 40));
        let ours = run_mission_on(&mask, Some(&prior), s, g, CostModel::log_reach(), &cfg).unwrap();
        let naive = run_mission_on::<f64>(&mask, None, s, g, CostModel::log_reach(), &cfg).unwrap();
        assert!(ours.success && naive.success);
        assert!(ours.length <= naive.length);
        assert!(naive.replans > 0);
    }

    #[test]
    fn sealed_goal_fails_without_hanging() {
        let obs = vec![
            Primitive::Box { center: [10.0, 8.0, 0.5], half_extents: [2.5, 0.25, 0.5], yaw: 0.0 },
            Primitive::Box { center: [10.0, 12.0, 0.5], half_extents: [2.5, 0.25, 0.5], yaw: 0.0 },
            Primitive::Box { center: [8.0, 10.0, 0.5], half_extents: [0.25, 2.5, 0.5], yaw: 0.0 },
            Primitive::Box { center: [12.0, 10.0, 0.5], half_extents: [0.25, 2.5, 0.5], yaw: 0.0 },
        ];
        let world = World::new([20.0, 20.0], Terrain::Flat { height: 0.0 }, obs, 0);
        let mask = TraversabilityMask::from_world(&world, &layout(80), 1.0);
        let r = run_mission_on::<f64>(&mask, None, (8, 8), (40, 40), CostModel::log_reach(), &MissionConfig::default()).unwrap();
        assert!(!r.success);
        assert!(r.goal_distance > 0.0);
        check_executed(&mask, &r);
    }

    #[test]
    fn missions_are_deterministic() {
        let world = wall_world();
        let l = layout(80);
        let prior = prior_from_mask(&TraversabilityMask::from_world(&world, &l, 1.0), 0.7, 0.1);
        let run = || run_mission(&world, &l, Some(&prior), (8, 20), (72, 20), CostModel::expected(5.0), &MissionConfig::default()).unwrap();
        let a = run();
        assert!(a.success);
        assert_eq!(a, run());
    }

    #[test]
    fn pairs_are_separated_and_clear() {
        let world = wall_world();
        let mask = TraversabilityMask::from_world(&world, &layout(80), 1.0);
        let pairs = sample_mission_pairs(&mask, 10, 10.0, 0.4, 4).unwrap();
        assert_eq!(pairs.len(), 10);
        for (a, b) in pairs {
            assert!(mask.is_clear(a, 0.4) && mask.is_clear(b, 0.4));
            assert!((mask.center(a) - mask.center(b)).norm() >= 10.0);
        }
        assert!(sample_mission_pairs(&mask, 1, 100.0, 0.4, 4).is_err());
    }

    #[test]
    fn ledger_format() {
        let rows = vec![LedgerRow { run_id: "a-1".into(), mode: "ua".into(), cost: "logreach".into(), length: 12.5, replans: 2, success: true }];
        let mut buf = Vec::new();
        write_ledger(&mut buf, &rows).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "run_id,mode,cost,length,replans,success\na-1,ua,logreach,12.5,2,true\n");
    }
}
