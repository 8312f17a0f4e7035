//! End-to-end acceptance criteria. One sequential test so that the timed
//! criteria do not compete for cores; every criterion prints a PASS/FAIL
//! line and the test fails if any criterion does.
//!
//! `ACCEPTANCE_ONLY=3,4` restricts the run to the listed criteria.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use canopy::evaluation::VoxelClass;
use canopy::experiment::{
    build_scenario, run_map_ablation, run_mission_study, write_ablation_csv, MapAblationConfig, MissionStudyConfig,
    SurveySpec,
};
use canopy::geom_io::{world_points, NoiseSpec, Pose, Trajectory};
use canopy::ground_filter::{segment_ground_on, CellLayout, ClothParams, GroundHeightMap, HeightSource};
use canopy::obstruction::{obstruction_score, ObstructionMap, ScoreMode};
use canopy::occupancy::{
    build_standard_map, build_ua_map, integrate_scan, sample_trajectory, GridSpec, OccupancyGrid, PosteriorModel,
    SensorModel, TrajectoryPosterior,
};
use canopy::planner::{self, path_reachability, Cell, CostModel, DStarLite, Path as GridPath};
use canopy::rng::derive_seed;
use canopy::simulation::{
    generate_forest, grid_spec_for, layout_for, simulate_flight, ForestParams, Primitive, Terrain, World,
};
use nalgebra::{Point3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn selected(n: usize) -> bool {
    match std::env::var("ACCEPTANCE_ONLY") {
        Ok(list) => list.split(',').any(|s| s.trim().parse() == Ok(n)),
        Err(_) => true,
    }
}

#[test]
fn acceptance() {
    let criteria: [(usize, &str, fn() -> Outcome); 9] = [
        (1, "UA vs standard map ordering under pose noise", c1_map_ordering),
        (2, "zero-noise UA map equals standard map", c2_zero_noise),
        (3, "D* Lite matches Dijkstra, fresh and after updates", c3_planner_oracle),
        (4, "log-reachability identity and optimality", c4_log_reach),
        (5, "obstruction score arithmetic", c5_obstruction),
        (6, "executed-length ratio study", c6_mission_ratio),
        (7, "cloth filter ground accuracy", c7_csf),
        (8, "SLAM drift variance growth", c8_drift),
        (9, "byte-identical reruns", c9_determinism),
    ];
    let mut failed = Vec::new();
    for (n, name, f) in criteria {
        if !selected(n) {
            continue;
        }
        let t = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                outcome(false, format!("panicked: {msg}"))
            });
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n}: {tag} [{name}] {} ({:.1} s)", o.detail, t.elapsed().as_secs_f64());
        if !o.pass {
            failed.push(n);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

// ---------------------------------------------------------------- 1

fn ablation_forests() -> Vec<ForestParams> {
    let base = ForestParams::default();
    vec![
        base.clone(),
        ForestParams { terrain: Terrain::Sinusoidal { base: 0.0, amplitude: 1.0, wavelength: 25.0 }, ..base.clone() },
        ForestParams { tree_density: 0.03, bush_density: 0.01, ..base },
    ]
}

fn c1_map_ordering() -> Outcome {
    let cfg = MapAblationConfig::default();
    let budget = Duration::from_secs(60);
    let mut failures = Vec::new();
    let mut worst = Duration::ZERO;
    let mut notes = Vec::new();
    for (f, forest) in ablation_forests().iter().enumerate() {
        let seed = derive_seed(2024, f as u64);
        let t = Instant::now();
        let scenario = build_scenario(forest, &cfg.survey, cfg.voxel_size, &cfg.sensor, seed).unwrap();
        let shared = t.elapsed() / cfg.levels.len() as u32;
        let mut auc_prev: Option<(f64, f64)> = None;
        for &k in &cfg.levels {
            let t = Instant::now();
            let level_cfg = MapAblationConfig { levels: vec![k], ..cfg.clone() };
            let r = run_map_ablation(&scenario, &level_cfg, derive_seed(seed, k.to_bits())).unwrap().remove(0);
            let took = t.elapsed() + shared;
            worst = worst.max(took);
            if took > budget {
                failures.push(format!("forest{f} k={k} took {:.1} s", took.as_secs_f64()));
            }
            let (s, u) = (r.standard_report(), r.ua_report());
            if !(u.auc.mean > s.auc.mean) {
                failures.push(format!("forest{f} k={k} AUC ua {:.4} <= std {:.4}", u.auc.mean, s.auc.mean));
            }
            if !(u.kld_overall.mean < s.kld_overall.mean) {
                failures.push(format!("forest{f} k={k} KLD ua {:.5} >= std {:.5}", u.kld_overall.mean, s.kld_overall.mean));
            }
            for c in VoxelClass::ALL {
                let (ku, ks) = (u.kld_class[c as usize].mean, s.kld_class[c as usize].mean);
                if !(ku < ks) {
                    failures.push(format!("forest{f} k={k} {} KLD ua {ku:.5} >= std {ks:.5}", c.label()));
                }
            }
            if let Some((ps, pu)) = auc_prev {
                if !(s.auc.mean < ps && u.auc.mean < pu) {
                    failures.push(format!("forest{f} k={k} AUC not decreasing in k"));
                }
            }
            auc_prev = Some((s.auc.mean, u.auc.mean));
            notes.push(format!(
                "f{f}k{k}: AUC {:.4}/{:.4} KLD {:.4}/{:.4}",
                s.auc.mean, u.auc.mean, s.kld_overall.mean, u.kld_overall.mean
            ));
        }
    }
    println!("  (std/ua) {}", notes.join("; "));
    let detail = format!(
        "3 forests x {:?} x {} reps, N={}; slowest forest-level {:.1} s of {} s budget on {} core(s){}",
        cfg.levels,
        cfg.repetitions,
        cfg.samples,
        worst.as_secs_f64(),
        budget.as_secs(),
        rayon::current_num_threads(),
        if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
    );
    outcome(failures.is_empty(), detail)
}

// ---------------------------------------------------------------- 2

fn c2_zero_noise() -> Outcome {
    let forest = ForestParams { size: [30.0, 30.0], ..ForestParams::default() };
    let survey = SurveySpec::default();
    let sensor = SensorModel::default();
    let scenario = build_scenario(&forest, &survey, 0.25, &sensor, 77).unwrap();
    let traj = scenario.flight.trajectory.clone();
    let scans = scenario.flight.noisy.clone();
    let t = Instant::now();
    let standard: OccupancyGrid<f64> = build_standard_map(&scans, &traj, &sensor, &scenario.spec);
    let mut worst = 0.0f64;
    let mut mask_ok = true;
    for model in [
        PosteriorModel::Exact,
        PosteriorModel::GpsIndependent(NoiseSpec::zero()),
        PosteriorModel::SlamDrift { drift: NoiseSpec::zero(), absolute: NoiseSpec::zero(), correction_period: 120.0 },
    ] {
        let post = TrajectoryPosterior::new(traj.clone(), model).unwrap();
        let ua: OccupancyGrid<f64> = build_ua_map(&scans, &post, 20, &sensor, &scenario.spec, 5).unwrap();
        mask_ok &= ua.observed() == standard.observed();
        for i in 0..standard.spec().len() {
            worst = worst.max((ua.probability(i) - standard.probability(i)).abs());
        }
    }
    let took = t.elapsed();
    let pass = mask_ok && worst <= 1e-12 && took < Duration::from_secs(5);
    outcome(
        pass,
        format!(
            "{} voxels, 3 zero-noise posteriors, N=20: max |dp| = {worst:.1e}, masks equal {mask_ok}, {:.2} s",
            standard.spec().len(),
            took.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 3, 4 oracles

fn layout(nx: usize, ny: usize) -> CellLayout {
    CellLayout::new(Vector2::zeros(), 0.25, [nx, ny]).unwrap()
}

fn random_map(rng: &mut ChaCha8Rng, nx: usize, ny: usize) -> ObstructionMap<f64> {
    let dense = rng.random_range(0.05..0.35);
    let b = (0..nx * ny)
        .map(|_| if rng.random_bool(dense) { rng.random_range(0.5..1.0) } else { rng.random_range(0.0..0.4) })
        .collect();
    ObstructionMap::from_scores(layout(nx, ny), b, vec![0.0; nx * ny]).unwrap()
}

/// Worst score among cells whose centers lie within `radius` meters of the
/// center of `c`; off-map cells count as fully obstructed.
fn oracle_b_max(map: &ObstructionMap<f64>, c: Cell, radius: f64) -> f64 {
    let [nx, ny] = map.dims();
    let cs = map.layout().cell_size;
    let reach = (radius / cs).ceil() as i64;
    let mut worst = 0.0f64;
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            if ((dx * dx + dy * dy) as f64).sqrt() * cs > radius {
                continue;
            }
            let (x, y) = (c.0 as i64 + dx, c.1 as i64 + dy);
            let b = if x < 0 || y < 0 || x >= nx as i64 || y >= ny as i64 {
                1.0
            } else {
                map.scores()[x as usize + nx * y as usize]
            };
            worst = worst.max(b);
        }
    }
    worst
}

#[derive(Clone, Copy)]
enum OracleCost {
    Expected(f64),
    LogReach,
}

fn oracle_edge(b: f64, len: f64, cost: OracleCost) -> f64 {
    match cost {
        OracleCost::Expected(c) => b * c + (1.0 - b) * len,
        OracleCost::LogReach => -(1.0 - b.min(1.0 - 1e-6)).ln() * len,
    }
}

fn to_model(cost: OracleCost) -> CostModel<f64> {
    match cost {
        OracleCost::Expected(c) => CostModel::expected(c),
        OracleCost::LogReach => CostModel::log_reach(),
    }
}

#[derive(PartialEq, PartialOrd)]
struct Dist(f64);
impl Eq for Dist {}
impl Ord for Dist {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&o.0)
    }
}

/// Textbook Dijkstra on the 8-connected grid.
fn dijkstra(map: &ObstructionMap<f64>, radius: f64, cost: OracleCost, s: Cell, g: Cell) -> f64 {
    let [nx, ny] = map.dims();
    let bmax: Vec<f64> = (0..nx * ny).map(|k| oracle_b_max(map, (k % nx, k / nx), radius)).collect();
    let mut dist = vec![f64::INFINITY; nx * ny];
    let mut heap = BinaryHeap::new();
    dist[s.0 + nx * s.1] = 0.0;
    heap.push(Reverse((Dist(0.0), s)));
    while let Some(Reverse((Dist(d), u))) = heap.pop() {
        if u == g {
            return d;
        }
        if d > dist[u.0 + nx * u.1] {
            continue;
        }
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (x, y) = (u.0 as i64 + dx, u.1 as i64 + dy);
                if (dx, dy) == (0, 0) || x < 0 || y < 0 || x >= nx as i64 || y >= ny as i64 {
                    continue;
                }
                let v = (x as usize, y as usize);
                let len = if dx != 0 && dy != 0 { 2f64.sqrt() } else { 1.0 };
                let nd = d + oracle_edge(bmax[v.0 + nx * v.1], len, cost);
                if nd < dist[v.0 + nx * v.1] {
                    dist[v.0 + nx * v.1] = nd;
                    heap.push(Reverse((Dist(nd), v)));
                }
            }
        }
    }
    f64::INFINITY
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

fn random_cell(rng: &mut ChaCha8Rng, n: usize) -> Cell {
    (rng.random_range(0..n), rng.random_range(0..n))
}

// ---------------------------------------------------------------- 3

fn c3_planner_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 50;
    let radius = 0.4;
    let costs = [OracleCost::LogReach, OracleCost::Expected(5.0), OracleCost::Expected(20.0)];
    let (mut fresh_checks, mut replan_checks, mut worst) = (0usize, 0usize, 0.0f64);
    let mut bad = Vec::new();
    for m in 0..100 {
        let map = random_map(&mut rng, n, n);
        let (s, g) = (random_cell(&mut rng, n), random_cell(&mut rng, n));
        for cost in costs {
            let p = planner::plan(&map, radius, s, g, to_model(cost)).unwrap();
            let want = dijkstra(&map, radius, cost, s, g);
            fresh_checks += 1;
            worst = worst.max((p.total_cost - want).abs() / want.max(1.0));
            if !close(p.total_cost, want) {
                bad.push(format!("map {m} fresh {} vs {want}", p.total_cost));
            }
        }
        for cost in costs {
            let mut truth = map.clone();
            let mut d = DStarLite::new(&truth, radius, s, g, to_model(cost)).unwrap();
            let mut path = d.plan().unwrap();
            for step in 0..20 {
                let changes: Vec<(Cell, f64)> = (0..rng.random_range(1..8))
                    .map(|_| (random_cell(&mut rng, n), if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..1.0) }))
                    .collect();
                for &(c, b) in &changes {
                    truth.set_score(c.0, c.1, b);
                }
                let start = path.cells.get(1).copied().unwrap_or(path.cells[0]);
                path = d.update_and_replan(&changes, start).unwrap();
                let want = dijkstra(&truth, radius, cost, start, g);
                replan_checks += 1;
                worst = worst.max((path.total_cost - want).abs() / want.max(1.0));
                if !close(path.total_cost, want) {
                    bad.push(format!("map {m} update {step}: {} vs {want}", path.total_cost));
                }
            }
        }
    }
    let took = t.elapsed();
    let pass = bad.is_empty() && took < Duration::from_secs(30);
    outcome(
        pass,
        format!(
            "{fresh_checks} fresh plans on 100 maps 50x50, {replan_checks} replans over 20-update sequences; worst rel err {worst:.1e}; {:.1} s of 30 s{}",
            took.as_secs_f64(),
            bad.iter().take(3).map(|b| format!("; {b}")).collect::<String>()
        ),
    )
}

// ---------------------------------------------------------------- 4

/// Whether any simple path from the current cell to `g` beats `target`.
/// Reachability only shrinks along a path, so branches at or below the
/// target are cut.
fn beats(map: &ObstructionMap<f64>, cur: Cell, g: Cell, r: f64, target: f64, seen: &mut [bool]) -> bool {
    if r <= target {
        return false;
    }
    if cur == g {
        return true;
    }
    let [nx, ny] = map.dims();
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            let (x, y) = (cur.0 as i64 + dx, cur.1 as i64 + dy);
            if (dx, dy) == (0, 0) || x < 0 || y < 0 || x >= nx as i64 || y >= ny as i64 {
                continue;
            }
            let k = x as usize + nx * y as usize;
            if seen[k] {
                continue;
            }
            let len = if dx != 0 && dy != 0 { 2f64.sqrt() } else { 1.0 };
            let nr = r * (1.0 - map.scores()[k]).powf(len);
            seen[k] = true;
            let found = beats(map, (x as usize, y as usize), g, nr, target, seen);
            seen[k] = false;
            if found {
                return true;
            }
        }
    }
    false
}

fn identity_error(p: &GridPath<f64>, map: &ObstructionMap<f64>, radius: f64) -> f64 {
    let r = path_reachability(p, map, radius);
    ((-p.total_cost).exp() - r).abs() / r.max(f64::MIN_POSITIVE)
}

fn c4_log_reach() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_identity = 0.0f64;
    let mut paths = 0;
    for _ in 0..100 {
        let map = random_map(&mut rng, 50, 50);
        let s = (rng.random_range(2..48), rng.random_range(2..48));
        let g = (rng.random_range(2..48), rng.random_range(2..48));
        let p = planner::plan(&map, 0.4, s, g, CostModel::log_reach()).unwrap();
        worst_identity = worst_identity.max(identity_error(&p, &map, 0.4));
        paths += 1;
    }
    let mut exhaustive = 0;
    let mut suboptimal = Vec::new();
    for (nx, ny) in [(2, 2), (3, 3), (4, 4), (5, 5), (6, 6), (3, 6), (6, 4)] {
        for _ in 0..6 {
            let b = (0..nx * ny).map(|_| rng.random_range(0.0..0.95)).collect();
            let map = ObstructionMap::from_scores(layout(nx, ny), b, vec![0.0; nx * ny]).unwrap();
            let (s, g) = ((0, 0), (nx - 1, ny - 1));
            let p = planner::plan(&map, 0.0, s, g, CostModel::log_reach()).unwrap();
            worst_identity = worst_identity.max(identity_error(&p, &map, 0.0));
            paths += 1;
            let r = path_reachability(&p, &map, 0.0);
            let mut seen = vec![false; nx * ny];
            seen[0] = true;
            if beats(&map, s, g, 1.0, r * (1.0 + 1e-9), &mut seen) {
                suboptimal.push(format!("{nx}x{ny}"));
            }
            exhaustive += 1;
        }
    }
    let pass = worst_identity <= 1e-9 && suboptimal.is_empty();
    outcome(
        pass,
        format!(
            "{paths} paths, max rel |exp(-J) - R| = {worst_identity:.1e}; {exhaustive} exhaustive grids up to 6x6, {} beaten{}",
            suboptimal.len(),
            if suboptimal.is_empty() { String::new() } else { format!(" ({})", suboptimal.join(",")) }
        ),
    )
}

// ---------------------------------------------------------------- 5

fn c5_obstruction() -> Outcome {
    let spec = GridSpec::new(Vector3::zeros(), 0.25, [3, 3, 6]).unwrap();
    let ground = GroundHeightMap::flat(CellLayout::new(Vector2::zeros(), 0.25, [3, 3]).unwrap(), 0.1);
    let w = [1.0, 2.0, 2.0, 2.0];
    let column = |grid: &mut OccupancyGrid<f64>, probs: &[f64]| {
        for (z, &p) in probs.iter().enumerate() {
            grid.set_probability(spec.linear([1, 1, z]), p);
        }
    };
    let score = |grid: &OccupancyGrid<f64>, w: &[f64]| {
        obstruction_score(grid, &ground, (1, 1), w, ScoreMode::WeightedMean).unwrap()
    };
    let mut grid = OccupancyGrid::new(spec);
    column(&mut grid, &[0.0; 4]);
    let zero = score(&grid, &w);
    column(&mut grid, &[1.0, 0.0, 0.0, 0.0]);
    let seventh = score(&grid, &w);

    // Saturate the column through the sensor model: repeated hits clamp
    // every voxel at p_max.
    let model = SensorModel::default();
    let mut sat = OccupancyGrid::new(spec);
    let rays: Vec<_> = (0..4)
        .map(|z| canopy::geom_io::WorldRay {
            origin: Point3::new(0.375, 0.375, 0.125 + 0.25 * z as f64),
            end: Point3::new(0.375, 0.375, 0.125 + 0.25 * z as f64),
            hit: true,
        })
        .collect();
    for _ in 0..50 {
        integrate_scan(&mut sat, &rays, &model);
    }
    let p_max_clamped = sat.probability(spec.linear([1, 1, 0]));
    let saturated = score(&sat, &w);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_scale = 0.0f64;
    for _ in 0..2000 {
        let probs: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
        let ws: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..5.0)).collect();
        let c = 10f64.powf(rng.random_range(-3.0..3.0));
        let scaled: Vec<f64> = ws.iter().map(|x| x * c).collect();
        let mut g = OccupancyGrid::new(spec);
        column(&mut g, &probs);
        worst_scale = worst_scale.max((score(&g, &ws) - score(&g, &scaled)).abs());
    }
    let pass = zero == 0.0 && seventh == 1.0 / 7.0 && saturated == p_max_clamped
        && (saturated - model.p_max).abs() <= 1e-12
        && worst_scale <= 1e-12;
    outcome(
        pass,
        format!(
            "b(0)={zero}, b(1,0,0,0)={seventh} (1/7={}), b(all 1)={saturated} (clamped p={p_max_clamped}, p_max={}), max scaling drift {worst_scale:.1e}",
            1.0 / 7.0,
            model.p_max
        ),
    )
}

// ---------------------------------------------------------------- 6

fn c6_mission_ratio() -> Outcome {
    let cfg = MissionStudyConfig { costs: vec![CostModel::log_reach()], ..MissionStudyConfig::default() };
    let t = Instant::now();
    let study = run_mission_study(&cfg, 42).unwrap();
    let took = t.elapsed();
    let reports = study.ratio_reports().unwrap();
    let mean = |label: &str| reports.iter().find(|(l, _)| l == label).map(|(_, r)| r.mean).unwrap();
    let mut failures = Vec::new();
    for (label, r) in &reports {
        if !(r.mean < 1.0) {
            failures.push(format!("{label} mean {:.4} >= 1", r.mean));
        }
    }
    let (slam_ua, slam_std) = (mean("slam-ua-logreach"), mean("slam-standard-logreach"));
    if !(slam_ua <= slam_std) {
        failures.push(format!("slam ua {slam_ua:.4} > standard {slam_std:.4}"));
    }
    if took > Duration::from_secs(600) {
        failures.push(format!("took {:.0} s", took.as_secs_f64()));
    }
    let summary: Vec<String> = reports
        .iter()
        .map(|(l, r)| format!("{l} {:.4} (fail {}/{})", r.mean, r.ours_failures, r.naive_failures))
        .collect();
    outcome(
        failures.is_empty(),
        format!(
            "{} pairs; {}; {:.0} s of 600 s{}",
            study.pairs.len(),
            summary.join(", "),
            took.as_secs_f64(),
            failures.iter().map(|f| format!("; {f}")).collect::<String>()
        ),
    )
}

// ---------------------------------------------------------------- 7

fn ground_of(world: &World, seed: u64) -> (GroundHeightMap, GridSpec) {
    let survey = SurveySpec { scan_rate: 2.0, ..SurveySpec::default() };
    let flight = simulate_flight(world, &survey.flight_for(world), seed).unwrap();
    let spec = grid_spec_for(world, 0.25).unwrap();
    let points = world_points(&flight.ideal, &flight.trajectory);
    let (_, ground) = segment_ground_on(&points, &ClothParams::default(), &layout_for(&spec).unwrap()).unwrap();
    (ground, spec)
}

fn measured_rmse(world: &World, ground: &GroundHeightMap) -> (f64, usize) {
    let l = &ground.layout;
    let mut sq = 0.0;
    let mut n = 0;
    for k in 0..l.len() {
        let (i, j) = l.unindex(k);
        let c = l.center(i, j);
        if ground.source[k] == HeightSource::Measured && world.in_bounds(c.x, c.y) {
            sq += (ground.heights[k] - world.ground_height(c.x, c.y)).powi(2);
            n += 1;
        }
    }
    ((sq / n.max(1) as f64).sqrt(), n)
}

fn box_virtual_error(half_width: f64) -> (usize, f64) {
    let boxed = Primitive::Box { center: [10.0, 10.0, 0.5], half_extents: [half_width, half_width, 0.5], yaw: 0.0 };
    let world = World::new([20.0, 20.0], Terrain::Flat { height: 0.0 }, vec![boxed], 1);
    let (ground, _) = ground_of(&world, 72);
    let l = &ground.layout;
    let mut under = 0;
    let mut worst = 0.0f64;
    for k in 0..l.len() {
        let (i, j) = l.unindex(k);
        let c = l.center(i, j);
        let inside = (c.x - 10.0).abs() < half_width && (c.y - 10.0).abs() < half_width;
        if inside && ground.source[k] == HeightSource::Virtual {
            under += 1;
            worst = worst.max(ground.heights[k].abs());
        }
    }
    (under, worst)
}

fn c7_csf() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    let terrains = [
        ("flat", Terrain::Flat { height: 0.0 }),
        ("undulating", Terrain::Sinusoidal { base: 0.0, amplitude: 1.0, wavelength: 20.0 }),
    ];
    for (name, terrain) in terrains {
        let forest = ForestParams { size: [30.0, 30.0], terrain, tree_density: 0.04, ..ForestParams::default() };
        let world = generate_forest(&forest, 70).unwrap();
        let (ground, _) = ground_of(&world, 71);
        let (rmse, n) = measured_rmse(&world, &ground);
        pass &= rmse <= 0.125 && n > 0;
        notes.push(format!("{name} RMSE {rmse:.3} m over {n} measured cells"));
    }

    // A boulder-sized box is the pass case. The cloth sags into the
    // inverted pit roughly with the square of its width, so a 4 m box is
    // reported alongside for scale.
    for (half_width, counts) in [(0.75, true), (2.0, false)] {
        let (under, worst) = box_virtual_error(half_width);
        if counts {
            pass &= under > 0 && worst <= 0.20;
        }
        notes.push(format!(
            "{:.1} m box: {under} virtual cells, max |h - ground| {worst:.3} m{}",
            2.0 * half_width,
            if counts { " (limit 0.20)" } else { " (informational)" }
        ));
    }
    outcome(pass, notes.join("; "))
}

// ---------------------------------------------------------------- 8

fn c8_drift() -> Outcome {
    let period = 120.0;
    let poses: Vec<Pose> = (0..120).map(|i| Pose::new(i as f64, Vector3::new(5.0, 5.0, 40.0), Vector3::zeros())).collect();
    let mean = Trajectory::new(poses).unwrap();
    let drift = NoiseSpec::from_meters_degrees([0.009, 0.009, 0.002], [0.0057; 3]);
    let absolute = NoiseSpec::from_meters_degrees([0.05; 3], [0.1; 3]);
    let post = TrajectoryPosterior::new(mean.clone(), PosteriorModel::SlamDrift { drift, absolute, correction_period: period }).unwrap();
    let samples: Vec<Trajectory> = (0..1000).map(|s| sample_trajectory(&post, derive_seed(8, s))).collect();
    let mut notes = Vec::new();
    let mut pass = true;
    for (axis, name) in ["x", "y", "z"].iter().enumerate() {
        let var: Vec<f64> = (0..mean.len())
            .map(|k| {
                let e: Vec<f64> = samples
                    .iter()
                    .map(|s| s.poses()[k].position[axis] - mean.poses()[k].position[axis])
                    .collect();
                let m = e.iter().sum::<f64>() / e.len() as f64;
                e.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (e.len() - 1) as f64
            })
            .collect();
        // Least-squares line through (k, var_k).
        let n = var.len() as f64;
        let mk = (n - 1.0) / 2.0;
        let mv = var.iter().sum::<f64>() / n;
        let sxy: f64 = var.iter().enumerate().map(|(k, v)| (k as f64 - mk) * (v - mv)).sum();
        let sxx: f64 = (0..var.len()).map(|k| (k as f64 - mk).powi(2)).sum();
        let slope = sxy / sxx;
        let want = drift.sigma[axis].powi(2);
        let rel = (slope - want) / want;
        pass &= rel.abs() <= 0.2;
        notes.push(format!("{name}: slope {slope:.3e} vs {want:.3e} ({:+.1}%)", rel * 100.0));
    }
    outcome(pass, format!("1000 samples, 120 poses per correction window; {}", notes.join(", ")))
}

// ---------------------------------------------------------------- 9

const DETERMINISM_CONFIG: &str = r#"
seed = 9
samples = 3

[world]
size = [16.0, 16.0]

[survey]
scan_rate = 2.0

[ablation]
forests = 2
levels = [1.0, 5.0]
repetitions = 2
samples = 3

[ablation.forest]
size = [16.0, 16.0]

[mission]
pairs = 4
min_separation = 6.0
samples = 3
costs = [{ mode = { kind = "log_reach" }, b_clamp_eps = 1e-6 }]

[mission.forest]
size = [20.0, 20.0]
"#;

fn run_pipeline(dir: &Path, out: &str) -> Vec<(String, Vec<u8>)> {
    let steps: [&[&str]; 10] = [
        &["gen-world"],
        &["fly"],
        &["map", "--mode", "standard"],
        &["map", "--mode", "ua"],
        &["score", "--mode", "ua"],
        &["plan", "--mode", "ua", "--cost", "logreach"],
        &["plan", "--mode", "ua", "--cost", "expected", "--cobst", "20"],
        &["evaluate", "--mode", "ua"],
        &["evaluate", "--ablation", "kld"],
        &["mission"],
    ];
    for args in steps {
        let o = Command::new(env!("CARGO_BIN_EXE_canopy"))
            .current_dir(dir)
            .args(["--config", "run.toml", "--out", out])
            .args(args)
            .output()
            .unwrap();
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir.join(out))
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn c9_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), DETERMINISM_CONFIG).unwrap();
    let a = run_pipeline(dir.path(), "a");
    let b = run_pipeline(dir.path(), "b");
    let csvs = a.iter().filter(|(n, _)| n.ends_with(".csv")).count();
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();

    // The library path too: two ablation runs serialize to the same bytes.
    let cfg = MapAblationConfig {
        forest: ForestParams { size: [16.0, 16.0], ..ForestParams::default() },
        levels: vec![1.0, 10.0],
        repetitions: 2,
        samples: 4,
        ..MapAblationConfig::default()
    };
    let csv = || {
        let sc = build_scenario(&cfg.forest, &cfg.survey, cfg.voxel_size, &cfg.sensor, 99).unwrap();
        let mut buf = Vec::new();
        write_ablation_csv(&mut buf, "f", &run_map_ablation(&sc, &cfg, 99).unwrap(), true).unwrap();
        buf
    };
    let lib_same = csv() == csv();
    let pass = a.len() == b.len() && differing.is_empty() && csvs >= 8 && lib_same;
    outcome(
        pass,
        format!(
            "CLI pipeline twice: {} artifacts ({csvs} CSV), {} differ{}; library ablation CSV identical {lib_same}",
            a.len(),
            differing.len(),
            if differing.is_empty() { String::new() } else { format!(" ({})", differing.join(",")) }
        ),
    )
}
