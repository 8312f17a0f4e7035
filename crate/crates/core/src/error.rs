use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("timestamps not strictly increasing at pose {index} (t={t})")]
    NonMonotonic { index: usize, t: f64 },
    #[error("pose index {index} out of range for trajectory of {len} poses")]
    PoseIndex { index: usize, len: usize },
    #[error("grids are not aligned: {0}")]
    Misaligned(String),
    #[error("cell ({0}, {1}) outside map bounds")]
    OutOfBounds(i64, i64),
    #[error("at least one trajectory sample is required")]
    ZeroSamples,
    #[error("goal unreachable from start")]
    Unreachable,
    #[error("AUC undefined: {positives} positive and {negatives} negative voxels")]
    UndefinedAuc { positives: usize, negatives: usize },
    #[error("run sets are not paired: {0}")]
    Unpaired(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("bad format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
