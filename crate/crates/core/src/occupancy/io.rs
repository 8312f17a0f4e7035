//! `UAOG1` binary grid format and CSV slice export.
//!
//! Layout (little-endian): magic `UAOG1`, origin as 3 x f64, voxel size as
//! f64, dims as 3 x u32, then one f32 log-odds per voxel (x fastest, then y,
//! then z), then the observed mask packed LSB-first into `ceil(n / 8)` bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use super::{GridSpec, OccupancyGrid};
use crate::error::{Error, Result};
use crate::scalar::Real;

const MAGIC: &[u8; 5] = b"UAOG1";

pub fn write_grid<T: Real, W: Write>(mut w: W, grid: &OccupancyGrid<T>) -> Result<()> {
    let s = grid.spec();
    w.write_all(MAGIC)?;
    for v in [s.origin.x, s.origin.y, s.origin.z, s.voxel_size] {
        w.write_all(&v.to_le_bytes())?;
    }
    for d in s.dims {
        let d = u32::try_from(d).map_err(|_| Error::Format("grid dimension exceeds u32".into()))?;
        w.write_all(&d.to_le_bytes())?;
    }
    for (l, &o) in grid.log_odds().iter().zip(grid.observed()) {
        let v = if o { l.to_f32().unwrap_or(0.0) } else { 0.0 };
        w.write_all(&v.to_le_bytes())?;
    }
    let mut mask = vec![0u8; grid.observed().len().div_ceil(8)];
    for (i, &o) in grid.observed().iter().enumerate() {
        if o {
            mask[i / 8] |= 1 << (i % 8);
        }
    }
    w.write_all(&mask)?;
    Ok(())
}

pub fn write_grid_file<T: Real>(path: impl AsRef<Path>, grid: &OccupancyGrid<T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_grid(&mut w, grid)?;
    w.flush()?;
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format("UAOG1 stream truncated".into()))?;
    Ok(b)
}

pub fn read_grid<T: Real, R: Read>(reader: R) -> Result<OccupancyGrid<T>> {
    let mut r = BufReader::new(reader);
    if &read_array::<5>(&mut r)? != MAGIC {
        return Err(Error::Format("not a UAOG1 grid".into()));
    }
    let mut f = [0.0f64; 4];
    for v in f.iter_mut() {
        *v = f64::from_le_bytes(read_array::<8>(&mut r)?);
    }
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        *d = u32::from_le_bytes(read_array::<4>(&mut r)?) as usize;
    }
    let spec = GridSpec::new(Vector3::new(f[0], f[1], f[2]), f[3], dims)?;
    let n = spec.len();
    let mut raw = vec![0u8; n * 4];
    r.read_exact(&mut raw)
        .map_err(|_| Error::Format("UAOG1 values truncated".into()))?;
    let log_odds: Vec<T> = raw
        .chunks_exact(4)
        .map(|c| T::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    let mut mask = vec![0u8; n.div_ceil(8)];
    r.read_exact(&mut mask)
        .map_err(|_| Error::Format("UAOG1 mask truncated".into()))?;
    let observed = (0..n).map(|i| mask[i / 8] & (1 << (i % 8)) != 0).collect();
    OccupancyGrid::from_parts(spec, log_odds, observed)
}

pub fn read_grid_file<T: Real>(path: impl AsRef<Path>) -> Result<OccupancyGrid<T>> {
    read_grid(File::open(path)?)
}

/// Writes `ix,iy,iz,probability` rows for one z layer, or for every observed
/// voxel when `iz` is `None`.
pub fn write_slice_csv<T: Real, W: Write>(mut w: W, grid: &OccupancyGrid<T>, iz: Option<usize>) -> Result<()> {
    writeln!(w, "ix,iy,iz,probability")?;
    let s = grid.spec();
    for i in 0..s.len() {
        let [x, y, z] = s.unlinear(i);
        let keep = match iz {
            Some(l) => z == l,
            None => grid.is_observed(i),
        };
        if keep {
            writeln!(w, "{x},{y},{z},{}", grid.probability(i))?;
        }
    }
    Ok(())
}
