//! Aerial lidar flights over a [`World`].

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::world::World;
use crate::error::{Error, Result};
use crate::geom_io::{Pose, Ray, ScanBundle, ScanSet, Trajectory, DEFAULT_MAX_RANGE};
use crate::rng::{derive_seed, rng};

/// Multi-beam spinning lidar. The spin axis is the sensor x axis, which
/// points along the flight direction, so each revolution sweeps a plane
/// across the track. Azimuth 0 points straight down.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LidarSpec {
    pub beams: usize,
    /// Half of the vertical field of view, degrees.
    pub vertical_half_fov_deg: f64,
    /// Half-width of the recorded azimuth window around nadir; 180 keeps the full revolution.
    pub azimuth_half_deg: f64,
    pub azimuth_step_deg: f64,
    pub max_range: f64,
}

impl Default for LidarSpec {
    fn default() -> Self {
        Self {
            beams: 16,
            vertical_half_fov_deg: 15.0,
            azimuth_half_deg: 180.0,
            azimuth_step_deg: 2.0,
            max_range: DEFAULT_MAX_RANGE,
        }
    }
}

impl LidarSpec {
    pub fn validate(&self) -> Result<()> {
        if self.beams == 0
            || !(self.vertical_half_fov_deg >= 0.0 && self.vertical_half_fov_deg < 90.0)
            || !(self.azimuth_half_deg > 0.0 && self.azimuth_half_deg <= 180.0)
            || !(self.azimuth_step_deg > 0.0)
            || !(self.max_range > 0.0)
        {
            return Err(Error::InvalidParam(format!("invalid lidar spec {self:?}")));
        }
        Ok(())
    }

    /// Unit beam directions in the sensor frame, beam-major within each azimuth.
    pub fn directions(&self) -> Vec<Vector3<f64>> {
        let elev: Vec<f64> = (0..self.beams)
            .map(|j| {
                if self.beams == 1 {
                    0.0
                } else {
                    -self.vertical_half_fov_deg + 2.0 * self.vertical_half_fov_deg * j as f64 / (self.beams - 1) as f64
                }
            })
            .collect();
        let n_az = if self.azimuth_half_deg >= 180.0 {
            (360.0 / self.azimuth_step_deg).round() as i64
        } else {
            2 * (self.azimuth_half_deg / self.azimuth_step_deg).floor() as i64 + 1
        };
        let a0 = if self.azimuth_half_deg >= 180.0 {
            -180.0
        } else {
            -self.azimuth_step_deg * ((n_az - 1) / 2) as f64
        };
        let mut out = Vec::with_capacity(n_az as usize * self.beams);
        for k in 0..n_az {
            let a = (a0 + k as f64 * self.azimuth_step_deg).to_radians();
            for &e in &elev {
                let e = e.to_radians();
                out.push(Vector3::new(e.sin(), e.cos() * a.sin(), -e.cos() * a.cos()));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlightSpec {
    /// Polyline flown at constant speed, world frame.
    pub waypoints: Vec<[f64; 3]>,
    pub speed: f64,
    /// Scans (poses) per second.
    pub scan_rate: f64,
    #[serde(default)]
    pub lidar: LidarSpec,
    #[serde(default = "default_range_sigma")]
    pub range_sigma: f64,
}

fn default_range_sigma() -> f64 {
    0.01
}

impl FlightSpec {
    /// Back-and-forth lines parallel to x, `line_spacing` apart, at `altitude`.
    pub fn lawnmower(size: [f64; 2], altitude: f64, line_spacing: f64, speed: f64, scan_rate: f64) -> Self {
        let mut waypoints = Vec::new();
        let lines = (size[1] / line_spacing).floor() as usize + 1;
        let y0 = 0.5 * (size[1] - (lines - 1) as f64 * line_spacing);
        for j in 0..lines {
            let y = y0 + j as f64 * line_spacing;
            let (a, b) = if j % 2 == 0 { (0.0, size[0]) } else { (size[0], 0.0) };
            waypoints.push([a, y, altitude]);
            waypoints.push([b, y, altitude]);
        }
        Self {
            waypoints,
            speed,
            scan_rate,
            lidar: LidarSpec::default(),
            range_sigma: default_range_sigma(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.lidar.validate()?;
        if self.waypoints.len() < 2 || !(self.speed > 0.0) || !(self.scan_rate > 0.0) || !(self.range_sigma >= 0.0) {
            return Err(Error::InvalidParam("flight needs two waypoints, positive speed and scan rate".into()));
        }
        Ok(())
    }

    /// Poses every `speed / scan_rate` meters along the polyline, heading
    /// along the current segment, roll and pitch zero.
    pub fn trajectory(&self) -> Result<Trajectory> {
        self.validate()?;
        let pts: Vec<Vector3<f64>> = self.waypoints.iter().map(|w| Vector3::from(*w)).collect();
        let seg_len: Vec<f64> = pts.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
        let total: f64 = seg_len.iter().sum();
        let spacing = self.speed / self.scan_rate;
        let n = (total / spacing).floor() as usize + 1;
        let mut poses = Vec::with_capacity(n);
        let (mut seg, mut seg_start) = (0, 0.0);
        for i in 0..n {
            let s = i as f64 * spacing;
            while seg + 1 < seg_len.len() && s > seg_start + seg_len[seg] {
                seg_start += seg_len[seg];
                seg += 1;
            }
            if seg_len[seg] == 0.0 {
                continue;
            }
            let dir = (pts[seg + 1] - pts[seg]) / seg_len[seg];
            let p = pts[seg] + dir * (s - seg_start).min(seg_len[seg]);
            let yaw = dir.y.atan2(dir.x);
            poses.push(Pose::new(i as f64 / self.scan_rate, p, Vector3::new(0.0, 0.0, yaw)));
        }
        Trajectory::new(poses)
    }
}

/// True trajectory with the ideal and range-noisy scans it produced.
#[derive(Clone, Debug, PartialEq)]
pub struct Flight {
    pub trajectory: Trajectory,
    pub ideal: ScanSet,
    pub noisy: ScanSet,
}

/// Casts every beam at every pose. Ideal scans hold exact intersections;
/// noisy scans add `N(0, range_sigma²)` to each hit range. Beams without a
/// surface within max range are misses at max range in both sets.
pub fn simulate_flight(world: &World, spec: &FlightSpec, seed: u64) -> Result<Flight> {
    let trajectory = spec.trajectory()?;
    let top = world.max_height();
    if let Some(w) = spec.waypoints.iter().find(|w| w[2] <= top) {
        return Err(Error::InvalidParam(format!("waypoint {w:?} is not above the canopy top {top}")));
    }
    let dirs = spec.lidar.directions();
    let max_range = spec.lidar.max_range;
    let (ideal, noisy): (Vec<ScanBundle>, Vec<ScanBundle>) = trajectory
        .poses()
        .par_iter()
        .enumerate()
        .map(|(i, pose)| {
            let mut r = rng(derive_seed(seed, i as u64));
            let rot = pose.rotation();
            let mut ideal = Vec::with_capacity(dirs.len());
            let mut noisy = Vec::with_capacity(dirs.len());
            for d in &dirs {
                match world.cast(&pose.position, &(rot * d), max_range) {
                    Some(t) => {
                        let e: f64 = r.sample(StandardNormal);
                        ideal.push(Ray::Hit(d * t));
                        noisy.push(Ray::Hit(d * (t + spec.range_sigma * e).clamp(0.0, max_range)));
                    }
                    None => {
                        ideal.push(Ray::Miss(d * max_range));
                        noisy.push(Ray::Miss(d * max_range));
                    }
                }
            }
            (ScanBundle { pose_index: i, rays: ideal }, ScanBundle { pose_index: i, rays: noisy })
        })
        .unzip();
    let n = trajectory.len();
    Ok(Flight {
        ideal: ScanSet::new(ideal, max_range, n)?,
        noisy: ScanSet::new(noisy, max_range, n)?,
        trajectory,
    })
}

/// Copy of `scans` with `N(0, sigma²)` added to every hit range. Misses are
/// kept. Deterministic in `seed`, independent of thread count.
pub fn add_range_noise(scans: &ScanSet, sigma: f64, seed: u64) -> Result<ScanSet> {
    let bundles: Vec<ScanBundle> = scans
        .bundles()
        .par_iter()
        .map(|b| {
            let mut r = rng(derive_seed(seed, b.pose_index as u64));
            let rays = b
                .rays
                .iter()
                .map(|ray| match *ray {
                    Ray::Hit(p) => {
                        let e: f64 = r.sample(StandardNormal);
                        let t = p.norm();
                        Ray::Hit(p * ((t + sigma * e).clamp(0.0, scans.max_range()) / t))
                    }
                    m => m,
                })
                .collect();
            ScanBundle { pose_index: b.pose_index, rays }
        })
        .collect();
    let n = bundles.iter().map(|b| b.pose_index + 1).max().unwrap_or(0);
    ScanSet::new(bundles, scans.max_range(), n)
}
