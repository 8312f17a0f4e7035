//! Poses, trajectories, lidar scan bundles and their file formats.
//!
//! Orientation is roll-pitch-yaw applied as `Rz(yaw) * Ry(pitch) * Rx(roll)`.
//! When no georeference is given the world frame is the frame the trajectory
//! file is expressed in (the aerial map frame).

mod csv;
mod ply;

pub use self::csv::{load_scans, load_trajectory, read_scans, read_trajectory, save_scans, save_trajectory, write_scans, write_trajectory};
pub use self::ply::{load_scans_ply, read_scans_ply, save_scans_ply, write_scans_ply};

use nalgebra::{Isometry3, Point3, Rotation3, Translation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// Default sensor range when a scan file does not state one.
pub const DEFAULT_MAX_RANGE: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    /// Seconds.
    pub t: f64,
    pub position: Vector3<f64>,
    /// Roll, pitch, yaw in radians.
    pub rpy: Vector3<f64>,
}

impl Pose {
    pub fn new(t: f64, position: Vector3<f64>, rpy: Vector3<f64>) -> Self {
        Self { t, position, rpy }
    }

    pub fn identity(t: f64) -> Self {
        Self::new(t, Vector3::zeros(), Vector3::zeros())
    }

    pub fn rotation(&self) -> Rotation3<f64> {
        Rotation3::from_euler_angles(self.rpy.x, self.rpy.y, self.rpy.z)
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::from(self.position),
            UnitQuaternion::from_rotation_matrix(&self.rotation()),
        )
    }

    pub fn from_isometry(t: f64, iso: &Isometry3<f64>) -> Self {
        let (roll, pitch, yaw) = iso.rotation.euler_angles();
        Self::new(t, iso.translation.vector, Vector3::new(roll, pitch, yaw))
    }

    /// Sensor frame to world frame.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.position
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.position.iter().all(|v| v.is_finite())
            && self.rpy.iter().all(|v| v.is_finite())
    }

    /// Position and orientation as `[x, y, z, roll, pitch, yaw]`.
    pub fn components(&self) -> [f64; 6] {
        [
            self.position.x,
            self.position.y,
            self.position.z,
            self.rpy.x,
            self.rpy.y,
            self.rpy.z,
        ]
    }

    pub fn from_components(t: f64, c: [f64; 6]) -> Self {
        Self::new(
            t,
            Vector3::new(c[0], c[1], c[2]),
            Vector3::new(c[3], c[4], c[5]),
        )
    }
}

/// Non-empty sequence of poses with strictly increasing timestamps.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::EmptyTrajectory);
        }
        for (i, p) in poses.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::InvalidParam(format!("pose {i} is not finite")));
            }
            if i > 0 && p.t <= poses[i - 1].t {
                return Err(Error::NonMonotonic { index: i, t: p.t });
            }
        }
        Ok(Self { poses })
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Pose> {
        self.poses.get(i)
    }
}

/// One lidar return in the sensor frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Ray {
    /// Measured hit point.
    Hit(Vector3<f64>),
    /// No return. Holds the point at max range along the beam, so the ray can
    /// still carve free space.
    Miss(Vector3<f64>),
}

impl Ray {
    pub fn endpoint(&self) -> &Vector3<f64> {
        match self {
            Ray::Hit(p) | Ray::Miss(p) => p,
        }
    }

    pub fn is_hit(&self) -> bool {
        matches!(self, Ray::Hit(_))
    }
}

/// All rays attributed to one trajectory pose.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanBundle {
    pub pose_index: usize,
    pub rays: Vec<Ray>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanSet {
    bundles: Vec<ScanBundle>,
    max_range: f64,
}

impl ScanSet {
    /// Groups bundles by pose index (ascending) and validates them against a
    /// trajectory length.
    pub fn new(bundles: Vec<ScanBundle>, max_range: f64, trajectory_len: usize) -> Result<Self> {
        if !(max_range > 0.0) {
            return Err(Error::InvalidParam(format!("max range {max_range} must be > 0")));
        }
        let mut grouped: Vec<ScanBundle> = Vec::new();
        let mut sorted = bundles;
        sorted.sort_by_key(|b| b.pose_index);
        for b in sorted {
            if b.pose_index >= trajectory_len {
                return Err(Error::PoseIndex {
                    index: b.pose_index,
                    len: trajectory_len,
                });
            }
            for r in &b.rays {
                if let Ray::Hit(p) = r {
                    if p.norm() > max_range {
                        return Err(Error::InvalidParam(format!(
                            "hit at {:.3} m beyond max range {max_range}",
                            p.norm()
                        )));
                    }
                }
            }
            match grouped.last_mut() {
                Some(last) if last.pose_index == b.pose_index => last.rays.extend(b.rays),
                _ => grouped.push(b),
            }
        }
        Ok(Self {
            bundles: grouped,
            max_range,
        })
    }

    pub fn empty(max_range: f64) -> Self {
        Self {
            bundles: Vec::new(),
            max_range,
        }
    }

    pub fn bundles(&self) -> &[ScanBundle] {
        &self.bundles
    }

    pub fn max_range(&self) -> f64 {
        self.max_range
    }

    pub fn ray_count(&self) -> usize {
        self.bundles.iter().map(|b| b.rays.len()).sum()
    }

    /// Same rays with bundles in a different order. Only used to check order
    /// independence of map building.
    pub fn with_bundle_order(&self, order: &[usize]) -> Self {
        Self {
            bundles: order.iter().map(|&i| self.bundles[i].clone()).collect(),
            max_range: self.max_range,
        }
    }
}

/// Per-component pose noise plus range noise.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseSpec {
    /// Standard deviations for `[x, y, z, roll, pitch, yaw]` (meters, radians).
    pub sigma: [f64; 6],
    /// Range standard deviation in meters.
    pub range_sigma: f64,
}

impl NoiseSpec {
    pub fn new(sigma: [f64; 6], range_sigma: f64) -> Result<Self> {
        let n = Self { sigma, range_sigma };
        n.validate()?;
        Ok(n)
    }

    pub fn zero() -> Self {
        Self {
            sigma: [0.0; 6],
            range_sigma: 0.0,
        }
    }

    /// Position sigmas in meters and angle sigmas in degrees.
    pub fn from_meters_degrees(pos: [f64; 3], deg: [f64; 3]) -> Self {
        Self {
            sigma: [
                pos[0],
                pos[1],
                pos[2],
                deg[0].to_radians(),
                deg[1].to_radians(),
                deg[2].to_radians(),
            ],
            range_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma.iter().chain([&self.range_sigma]).any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidParam(format!("noise sigmas must be finite and >= 0: {self:?}")));
        }
        Ok(())
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            sigma: self.sigma.map(|s| s * k),
            range_sigma: self.range_sigma,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sigma.iter().all(|&s| s == 0.0)
    }
}

/// A ray expressed in the world frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorldRay {
    pub origin: Point3<f64>,
    pub end: Point3<f64>,
    pub hit: bool,
}

/// World-frame hit points of a bundle. Miss rays are skipped.
pub fn transform_to_world(bundle: &ScanBundle, pose: &Pose) -> Vec<Vector3<f64>> {
    let rot = pose.rotation();
    bundle
        .rays
        .iter()
        .filter_map(|r| match r {
            Ray::Hit(p) => Some(rot * p + pose.position),
            Ray::Miss(_) => None,
        })
        .collect()
}

/// World-frame segments for every ray of a bundle, including misses.
pub fn world_rays(bundle: &ScanBundle, pose: &Pose) -> Vec<WorldRay> {
    let rot = pose.rotation();
    let origin = Point3::from(pose.position);
    bundle
        .rays
        .iter()
        .map(|r| WorldRay {
            origin,
            end: Point3::from(rot * r.endpoint() + pose.position),
            hit: r.is_hit(),
        })
        .collect()
}

/// All world-frame hit points of a scan set under a trajectory.
pub fn world_points(scans: &ScanSet, trajectory: &Trajectory) -> Vec<Vector3<f64>> {
    scans
        .bundles()
        .iter()
        .flat_map(|b| transform_to_world(b, &trajectory.poses()[b.pose_index]))
        .collect()
}
