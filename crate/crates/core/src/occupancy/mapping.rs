//! Standard and uncertainty-aware occupancy mapping.

use nalgebra::Point3;
use rayon::prelude::*;

use super::raycast::walk_clipped;
use super::sampling::{sample_trajectory, TrajectoryPosterior};
use super::{GridSpec, OccupancyGrid, SensorModel};
use crate::error::{Error, Result};
use crate::geom_io::{world_rays, ScanSet, Trajectory, WorldRay};
use crate::rng::derive_seed;
use crate::scalar::{logit, sigmoid, Real};

fn truncate(ray: &WorldRay, max_range: f64) -> WorldRay {
    let d = ray.end - ray.origin;
    let len = d.norm();
    if len > max_range {
        WorldRay {
            origin: ray.origin,
            end: ray.origin + d * (max_range / len),
            hit: false,
        }
    } else {
        *ray
    }
}

/// Walks one ray, calling `update(i, is_hit)` once per in-grid voxel. The
/// voxel containing a hit endpoint gets `true`; all others are pass-throughs.
fn for_each_update(spec: &GridSpec, ray: &WorldRay, max_range: f64, mut update: impl FnMut(usize, bool)) {
    let ray = truncate(ray, max_range);
    walk_clipped(spec, &ray.origin, &ray.end, |i, is_end| update(i, ray.hit && is_end));
}

/// Adds one bundle of world-frame rays to `grid`, clamping after each update.
pub fn integrate_scan<T: Real>(grid: &mut OccupancyGrid<T>, rays: &[WorldRay], model: &SensorModel) {
    let hit: T = model.hit_log_odds();
    let miss: T = model.miss_log_odds();
    let spec = *grid.spec();
    for ray in rays {
        for_each_update(&spec, ray, model.max_range, |i, is_hit| {
            let l = grid.log_odds()[i] + if is_hit { hit } else { miss };
            grid.set_raw(i, model.clamp(l), true);
        });
    }
}

/// Per-voxel hit and pass-through counts. Integer counts make the final map
/// independent of the order in which rays are added.
#[derive(Clone, Debug)]
pub struct RayCounts {
    spec: GridSpec,
    hits: Vec<u16>,
    misses: Vec<u16>,
}

impl RayCounts {
    pub fn new(spec: GridSpec) -> Self {
        Self {
            spec,
            hits: vec![0; spec.len()],
            misses: vec![0; spec.len()],
        }
    }

    pub fn add_ray(&mut self, ray: &WorldRay, max_range: f64) {
        let (hits, misses) = (&mut self.hits, &mut self.misses);
        for_each_update(&self.spec, ray, max_range, |i, is_hit| {
            let c = if is_hit { &mut hits[i] } else { &mut misses[i] };
            *c = c.saturating_add(1);
        });
    }

    pub fn add_scans(&mut self, scans: &ScanSet, trajectory: &Trajectory, max_range: f64) {
        let max_range = max_range.min(scans.max_range());
        for b in scans.bundles() {
            for ray in world_rays(b, &trajectory.poses()[b.pose_index]) {
                self.add_ray(&ray, max_range);
            }
        }
    }

    pub fn counts(&self, i: usize) -> (u16, u16) {
        (self.hits[i], self.misses[i])
    }

    /// Clamped log-odds of voxel `i`, or `None` when no ray reached it.
    #[inline]
    fn log_odds<T: Real>(&self, i: usize, hit: T, miss: T, model: &SensorModel) -> Option<T> {
        let (h, m) = (self.hits[i], self.misses[i]);
        if h == 0 && m == 0 {
            return None;
        }
        Some(model.clamp(T::lit(h as f64) * hit + T::lit(m as f64) * miss))
    }

    pub fn to_grid<T: Real>(&self, model: &SensorModel) -> OccupancyGrid<T> {
        let (hit, miss) = (model.hit_log_odds(), model.miss_log_odds());
        let mut grid = OccupancyGrid::new(self.spec);
        for i in 0..self.spec.len() {
            if let Some(l) = self.log_odds(i, hit, miss, model) {
                grid.set_raw(i, l, true);
            }
        }
        grid
    }
}

/// Occupancy map for a fixed trajectory: every bundle is transformed by its
/// pose and integrated. Log-odds are clamped once, after all rays.
pub fn build_standard_map<T: Real>(
    scans: &ScanSet,
    trajectory: &Trajectory,
    model: &SensorModel,
    spec: &GridSpec,
) -> OccupancyGrid<T> {
    let mut counts = RayCounts::new(*spec);
    counts.add_scans(scans, trajectory, model.max_range);
    counts.to_grid(model)
}

/// Seed of the `k`-th trajectory sample drawn by [`build_ua_map`].
pub fn sample_seed(seed: u64, k: usize) -> u64 {
    derive_seed(seed, k as u64)
}

/// Uncertainty-aware map: the per-voxel arithmetic mean of occupancy
/// probabilities over `n` standard maps built from trajectory samples.
///
/// A voxel is observed if any sample observed it; samples that did not
/// observe it contribute 0.5. Where all samples agree exactly the common
/// log-odds value is kept as is. Samples are built in parallel and folded in
/// sample order, so results do not depend on the thread count.
pub fn build_ua_map<T: Real>(
    scans: &ScanSet,
    posterior: &TrajectoryPosterior,
    n: usize,
    model: &SensorModel,
    spec: &GridSpec,
    seed: u64,
) -> Result<OccupancyGrid<T>> {
    if n == 0 {
        return Err(Error::ZeroSamples);
    }
    let len = spec.len();
    let (hit, miss): (T, T) = (model.hit_log_odds(), model.miss_log_odds());
    let half = T::lit(0.5);

    let mut sum = vec![T::zero(); len];
    let mut first = vec![None::<T>; len];
    let mut agree = vec![true; len];
    let batch = rayon::current_num_threads().max(1);
    // Log-odds and probability for small counts, which cover most voxels.
    const TABLE: usize = 64;
    let table: Vec<(Option<T>, T)> = (0..TABLE * TABLE)
        .map(|k| {
            let (h, m) = (k / TABLE, k % TABLE);
            if h == 0 && m == 0 {
                (None, half)
            } else {
                let l = model.clamp(T::lit(h as f64) * hit + T::lit(m as f64) * miss);
                (Some(l), sigmoid(l))
            }
        })
        .collect();

    let mut k0 = 0;
    while k0 < n {
        let ks: Vec<usize> = (k0..(k0 + batch).min(n)).collect();
        let samples: Vec<RayCounts> = ks
            .par_iter()
            .map(|&k| {
                let traj = sample_trajectory(posterior, sample_seed(seed, k));
                let mut c = RayCounts::new(*spec);
                c.add_scans(scans, &traj, model.max_range);
                c
            })
            .collect();
        for (&k, counts) in ks.iter().zip(&samples) {
            (sum.par_iter_mut(), first.par_iter_mut(), agree.par_iter_mut())
                .into_par_iter()
                .enumerate()
                .for_each(|(i, (s, f, a))| {
                    let (h, m) = counts.counts(i);
                    let (l, p) = if (h as usize) < TABLE && (m as usize) < TABLE {
                        table[h as usize * TABLE + m as usize]
                    } else {
                        let l = counts.log_odds(i, hit, miss, model).expect("counted");
                        (Some(l), sigmoid(l))
                    };
                    *s = *s + p;
                    if k == 0 {
                        *f = l;
                    } else if *a && *f != l {
                        *a = false;
                    }
                });
        }
        k0 += ks.len();
    }

    let nt = T::lit(n as f64);
    let mut grid = OccupancyGrid::new(*spec);
    for i in 0..len {
        if agree[i] {
            if let Some(l) = first[i] {
                grid.set_raw(i, l, true);
            }
        } else {
            // Disagreement implies at least one sample observed the voxel.
            grid.set_raw(i, logit(sum[i] / nt), true);
        }
    }
    Ok(grid)
}

/// Convenience: map from world-frame rays that all start at `origin`.
pub fn rays_from(origin: Point3<f64>, ends: &[(Point3<f64>, bool)]) -> Vec<WorldRay> {
    ends.iter()
        .map(|&(end, hit)| WorldRay { origin, end, hit })
        .collect()
}
