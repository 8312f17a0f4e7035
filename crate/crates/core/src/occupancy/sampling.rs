//! Drawing trajectory samples from a pose-estimation posterior.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom_io::{NoiseSpec, Pose, Trajectory};
use crate::rng::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PosteriorModel {
    /// The mean trajectory is exact.
    Exact,
    /// Poses estimated independently from absolute measurements (GPS-like).
    GpsIndependent(NoiseSpec),
    /// Odometry-like estimate: relative transforms drift and absolute
    /// observations re-anchor the chain every `correction_period` seconds.
    SlamDrift {
        drift: NoiseSpec,
        absolute: NoiseSpec,
        correction_period: f64,
    },
}

impl PosteriorModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            PosteriorModel::Exact => Ok(()),
            PosteriorModel::GpsIndependent(n) => n.validate(),
            PosteriorModel::SlamDrift {
                drift,
                absolute,
                correction_period,
            } => {
                drift.validate()?;
                absolute.validate()?;
                if !(*correction_period > 0.0) {
                    return Err(Error::InvalidParam(format!(
                        "correction period {correction_period} must be > 0"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Same model with every pose sigma multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        match *self {
            PosteriorModel::Exact => PosteriorModel::Exact,
            PosteriorModel::GpsIndependent(n) => PosteriorModel::GpsIndependent(n.scaled(k)),
            PosteriorModel::SlamDrift {
                drift,
                absolute,
                correction_period,
            } => PosteriorModel::SlamDrift {
                drift: drift.scaled(k),
                absolute: absolute.scaled(k),
                correction_period,
            },
        }
    }

    fn is_degenerate(&self) -> bool {
        match self {
            PosteriorModel::Exact => true,
            PosteriorModel::GpsIndependent(n) => n.is_zero(),
            PosteriorModel::SlamDrift { drift, absolute, .. } => drift.is_zero() && absolute.is_zero(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryPosterior {
    pub mean: Trajectory,
    pub model: PosteriorModel,
}

impl TrajectoryPosterior {
    pub fn new(mean: Trajectory, model: PosteriorModel) -> Result<Self> {
        model.validate()?;
        Ok(Self { mean, model })
    }

    pub fn exact(mean: Trajectory) -> Self {
        Self {
            mean,
            model: PosteriorModel::Exact,
        }
    }
}

fn gaussian6(r: &mut impl Rng, sigma: &[f64; 6]) -> [f64; 6] {
    sigma.map(|s| s * r.sample::<f64, _>(StandardNormal))
}

fn perturb(pose: &Pose, noise: [f64; 6]) -> Pose {
    let c = pose.components();
    Pose::from_components(pose.t, std::array::from_fn(|i| c[i] + noise[i]))
}

/// Draws one trajectory. Deterministic in `seed`; a noise-free model returns
/// the mean unchanged.
pub fn sample_trajectory(posterior: &TrajectoryPosterior, seed: u64) -> Trajectory {
    if posterior.model.is_degenerate() {
        return posterior.mean.clone();
    }
    let mut r = rng(seed);
    let mean = posterior.mean.poses();
    let poses = match &posterior.model {
        PosteriorModel::Exact => unreachable!(),
        PosteriorModel::GpsIndependent(noise) => mean
            .iter()
            .map(|p| perturb(p, gaussian6(&mut r, &noise.sigma)))
            .collect(),
        PosteriorModel::SlamDrift {
            drift,
            absolute,
            correction_period,
        } => {
            let t0 = mean[0].t;
            let epoch = |t: f64| ((t - t0) / correction_period).floor() as i64;
            let mut out: Vec<Pose> = Vec::with_capacity(mean.len());
            for (i, m) in mean.iter().enumerate() {
                let anchored = i == 0 || epoch(m.t) != epoch(mean[i - 1].t);
                let pose = if anchored {
                    perturb(m, gaussian6(&mut r, &absolute.sigma))
                } else {
                    let rel = mean[i - 1].isometry().inverse() * m.isometry();
                    let n = gaussian6(&mut r, &drift.sigma);
                    let delta = Pose::new(0.0, Vector3::new(n[0], n[1], n[2]), Vector3::new(n[3], n[4], n[5]));
                    let iso = out[i - 1].isometry() * rel * delta.isometry();
                    Pose::from_isometry(m.t, &iso)
                };
                out.push(pose);
            }
            out
        }
    };
    Trajectory::new(poses).expect("perturbation keeps timestamps")
}
