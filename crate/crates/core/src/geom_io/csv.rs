use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use super::{Pose, Ray, ScanBundle, ScanSet, Trajectory, DEFAULT_MAX_RANGE};
use crate::error::{Error, Result};

const TRAJECTORY_HEADER: &str = "t,x,y,z,roll,pitch,yaw";
const SCAN_HEADER: &str = "pose_idx,sx,sy,sz,miss";

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_f64(path: &Path, line: usize, field: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|e| parse_err(path, line, format!("bad number {field:?}: {e}")))
}

/// Yields `(line_number, content)` for non-blank, non-comment lines.
fn data_lines<R: Read>(reader: R) -> impl Iterator<Item = (usize, std::io::Result<String>)> {
    BufReader::new(reader)
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| match l {
            Ok(s) => !s.trim().is_empty() && !s.trim_start().starts_with('#'),
            Err(_) => true,
        })
}

pub fn read_trajectory<R: Read>(reader: R, path: &Path) -> Result<Trajectory> {
    let mut poses = Vec::new();
    for (n, line) in data_lines(reader) {
        let line = line?;
        if line.trim() == TRAJECTORY_HEADER {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(parse_err(path, n, format!("expected 7 fields, got {}", fields.len())));
        }
        let mut v = [0.0; 7];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = parse_f64(path, n, f)?;
        }
        poses.push(Pose::from_components(v[0], [v[1], v[2], v[3], v[4], v[5], v[6]]));
    }
    Trajectory::new(poses)
}

pub fn load_trajectory(path: impl AsRef<Path>) -> Result<Trajectory> {
    let path = path.as_ref();
    read_trajectory(File::open(path)?, path)
}

pub fn write_trajectory<W: Write>(mut w: W, traj: &Trajectory) -> Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for p in traj.poses() {
        let c = p.components();
        writeln!(w, "{},{},{},{},{},{},{}", p.t, c[0], c[1], c[2], c[3], c[4], c[5])?;
    }
    Ok(())
}

pub fn save_trajectory(path: impl AsRef<Path>, traj: &Trajectory) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_trajectory(&mut w, traj)?;
    w.flush()?;
    Ok(())
}

/// Reads a scan CSV. A leading `# max_range=<m>` comment sets the sensor
/// range; otherwise [`DEFAULT_MAX_RANGE`] is used.
pub fn read_scans<R: Read>(reader: R, path: &Path, trajectory: &Trajectory) -> Result<ScanSet> {
    let mut max_range = DEFAULT_MAX_RANGE;
    let mut bundles: Vec<ScanBundle> = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let n = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed == SCAN_HEADER {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some(v) = comment.trim().strip_prefix("max_range=") {
                max_range = parse_f64(path, n, v)?;
            }
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 5 {
            return Err(parse_err(path, n, format!("expected 5 fields, got {}", fields.len())));
        }
        let pose_index: usize = fields[0]
            .trim()
            .parse()
            .map_err(|e| parse_err(path, n, format!("bad pose index {:?}: {e}", fields[0])))?;
        if pose_index >= trajectory.len() {
            return Err(Error::PoseIndex {
                index: pose_index,
                len: trajectory.len(),
            });
        }
        let p = Vector3::new(
            parse_f64(path, n, fields[1])?,
            parse_f64(path, n, fields[2])?,
            parse_f64(path, n, fields[3])?,
        );
        let ray = match fields[4].trim() {
            "0" => Ray::Hit(p),
            "1" => Ray::Miss(p),
            other => return Err(parse_err(path, n, format!("miss flag must be 0 or 1, got {other:?}"))),
        };
        match bundles.last_mut() {
            Some(b) if b.pose_index == pose_index => b.rays.push(ray),
            _ => bundles.push(ScanBundle {
                pose_index,
                rays: vec![ray],
            }),
        }
    }
    ScanSet::new(bundles, max_range, trajectory.len())
}

pub fn load_scans(path: impl AsRef<Path>, trajectory: &Trajectory) -> Result<ScanSet> {
    let path = path.as_ref();
    read_scans(File::open(path)?, path, trajectory)
}

pub fn write_scans<W: Write>(mut w: W, scans: &ScanSet) -> Result<()> {
    writeln!(w, "# max_range={}", scans.max_range())?;
    writeln!(w, "{SCAN_HEADER}")?;
    for b in scans.bundles() {
        for r in &b.rays {
            let p = r.endpoint();
            let miss = u8::from(!r.is_hit());
            writeln!(w, "{},{},{},{},{}", b.pose_index, p.x, p.y, p.z, miss)?;
        }
    }
    Ok(())
}

pub fn save_scans(path: impl AsRef<Path>, scans: &ScanSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_scans(&mut w, scans)?;
    w.flush()?;
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::path::PathBuf;

    fn label(p: &str) -> PathBuf {
        PathBuf::from(p)
    }

    fn traj(src: &str) -> Result<Trajectory> {
        read_trajectory(src.as_bytes(), &label("traj.csv"))
    }

    #[test]
    fn three_poses() {
        let t = traj("t,x,y,z,roll,pitch,yaw\n0,0,0,0,0,0,0\n1,1,0,0,0,0,0\n2,2,0,0,0,0,0.5\n").unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.poses()[2].rpy.z, 0.5);
    }

    #[test]
    fn decreasing_timestamps() {
        let err = traj("t,x,y,z,roll,pitch,yaw\n1,0,0,0,0,0,0\n0.5,0,0,0,0,0,0\n").unwrap_err();
        assert!(matches!(err, Error::NonMonotonic { index: 1, .. }));
    }

    #[test]
    fn empty_file() {
        assert!(matches!(traj(""), Err(Error::EmptyTrajectory)));
        assert!(matches!(traj("t,x,y,z,roll,pitch,yaw\n"), Err(Error::EmptyTrajectory)));
    }

    #[test]
    fn parse_error_has_line_number() {
        let err = traj("t,x,y,z,roll,pitch,yaw\n0,0,0,0,0,0,0\n1,0,zz,0,0,0,0\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    fn three_pose_traj() -> Trajectory {
        traj("0,0,0,0,0,0,0\n1,0,0,0,0,0,0\n2,0,0,0,0,0,0\n").unwrap()
    }

    #[test]
    fn scans_group_and_flag() {
        let t = three_pose_traj();
        let src = "pose_idx,sx,sy,sz,miss\n0,1,2,3,0\n0,4,5,6,0\n1,0,0,-100,1\n";
        let s = read_scans(src.as_bytes(), &label("s.csv"), &t).unwrap();
        assert_eq!(s.bundles().len(), 2);
        assert_eq!(s.bundles()[0].rays.len(), 2);
        assert!(matches!(s.bundles()[1].rays[0], Ray::Miss(_)));
    }

    #[test]
    fn scans_bad_pose_index() {
        let t = three_pose_traj();
        let err = read_scans("7,1,0,0,0\n".as_bytes(), &label("s.csv"), &t).unwrap_err();
        assert!(matches!(err, Error::PoseIndex { index: 7, len: 3 }));
        let err = read_scans("0,1,0\n".as_bytes(), &label("s.csv"), &t).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    proptest! {
        #[test]
        fn csv_round_trip_bit_identical(
            rows in prop::collection::vec((prop::array::uniform6(-1e3f64..1e3), any::<bool>()), 1..20)
        ) {
            let poses: Vec<Pose> = rows.iter().enumerate()
                .map(|(i, (c, _))| Pose::from_components(i as f64 * 0.1 + 1e-3, *c))
                .collect();
            let t = Trajectory::new(poses).unwrap();
            let mut buf = Vec::new();
            write_trajectory(&mut buf, &t).unwrap();
            let back = read_trajectory(buf.as_slice(), &label("t")).unwrap();
            prop_assert_eq!(&back, &t);

            let bundles = rows.iter().enumerate().map(|(i, (c, miss))| {
                let p = Vector3::new(c[0], c[1], c[2]) * 0.05;
                ScanBundle { pose_index: i, rays: vec![if *miss { Ray::Miss(p) } else { Ray::Hit(p) }] }
            }).collect();
            let s = ScanSet::new(bundles, 150.0, t.len()).unwrap();
            let mut buf = Vec::new();
            write_scans(&mut buf, &s).unwrap();
            let back = read_scans(buf.as_slice(), &label("s"), &t).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
