//! Binary little-endian PLY import/export of sensor-frame scan points.
//!
//! Required vertex properties: `x`, `y`, `z` and `pose_idx`. An optional
//! `miss` property flags no-return rays. Any scalar PLY type is accepted on
//! read; export writes `double` coordinates so round trips are exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use super::{Ray, ScanBundle, ScanSet, Trajectory, DEFAULT_MAX_RANGE};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct Layout {
    count: usize,
    stride: usize,
    // (offset, type) for x, y, z, pose_idx, miss
    x: (usize, Scalar),
    y: (usize, Scalar),
    z: (usize, Scalar),
    pose: (usize, Scalar),
    miss: Option<(usize, Scalar)>,
    max_range: f64,
}

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn read_header<R: BufRead>(r: &mut R) -> Result<Layout> {
    let mut line = String::new();
    let mut next = |r: &mut R| -> Result<String> {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(fmt_err("PLY header ended early"));
        }
        Ok(line.trim_end().to_string())
    };
    if next(r)? != "ply" {
        return Err(fmt_err("missing `ply` magic"));
    }
    let mut count = None;
    let mut in_vertex = false;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    let mut max_range = DEFAULT_MAX_RANGE;
    loop {
        let l = next(r)?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks.as_slice() {
            ["format", fmt, _] => {
                if *fmt != "binary_little_endian" {
                    return Err(fmt_err(format!("unsupported PLY format {fmt}")));
                }
            }
            ["comment", rest @ ..] => {
                if let Some(v) = rest.first().and_then(|s| s.strip_prefix("max_range=")) {
                    max_range = v.parse().map_err(|_| fmt_err(format!("bad max_range {v}")))?;
                }
            }
            ["element", name, n] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    count = Some(n.parse().map_err(|_| fmt_err(format!("bad vertex count {n}")))?);
                } else if count.is_none() {
                    return Err(fmt_err("elements before `vertex` are not supported"));
                }
            }
            ["property", "list", ..] if in_vertex => {
                return Err(fmt_err("list properties on vertices are not supported"));
            }
            ["property", ty, name] if in_vertex => {
                let s = Scalar::parse(ty).ok_or_else(|| fmt_err(format!("unknown PLY type {ty}")))?;
                props.push((name.to_string(), s));
            }
            ["property", ..] => {}
            ["end_header"] => break,
            ["obj_info", ..] => {}
            _ => return Err(fmt_err(format!("unexpected header line {l:?}"))),
        }
    }
    let count = count.ok_or_else(|| fmt_err("no vertex element"))?;
    let mut offset = 0;
    let mut find = |name: &str| -> Option<(usize, Scalar)> {
        offset = 0;
        for (n, s) in &props {
            if n == name {
                return Some((offset, *s));
            }
            offset += s.size();
        }
        None
    };
    let need = |name: &str, v: Option<(usize, Scalar)>| v.ok_or_else(|| fmt_err(format!("missing vertex property {name}")));
    let x = need("x", find("x"))?;
    let y = need("y", find("y"))?;
    let z = need("z", find("z"))?;
    let pose = need("pose_idx", find("pose_idx"))?;
    let miss = find("miss");
    let stride = props.iter().map(|(_, s)| s.size()).sum();
    Ok(Layout {
        count,
        stride,
        x,
        y,
        z,
        pose,
        miss,
        max_range,
    })
}

pub fn read_scans_ply<R: Read>(reader: R, trajectory: &Trajectory) -> Result<ScanSet> {
    let mut r = BufReader::new(reader);
    let layout = read_header(&mut r)?;
    let mut buf = vec![0u8; layout.stride];
    let mut bundles: Vec<ScanBundle> = Vec::new();
    for i in 0..layout.count {
        r.read_exact(&mut buf)
            .map_err(|_| fmt_err(format!("PLY body truncated at vertex {i}")))?;
        let get = |(off, s): (usize, Scalar)| s.decode(&buf[off..off + s.size()]);
        let pose_f = get(layout.pose);
        if pose_f < 0.0 || pose_f.fract() != 0.0 {
            return Err(fmt_err(format!("vertex {i}: pose_idx {pose_f} is not a valid index")));
        }
        let pose_index = pose_f as usize;
        if pose_index >= trajectory.len() {
            return Err(Error::PoseIndex {
                index: pose_index,
                len: trajectory.len(),
            });
        }
        let p = Vector3::new(get(layout.x), get(layout.y), get(layout.z));
        let miss = layout.miss.map(|m| get(m) != 0.0).unwrap_or(false);
        let ray = if miss { Ray::Miss(p) } else { Ray::Hit(p) };
        match bundles.last_mut() {
            Some(b) if b.pose_index == pose_index => b.rays.push(ray),
            _ => bundles.push(ScanBundle {
                pose_index,
                rays: vec![ray],
            }),
        }
    }
    ScanSet::new(bundles, layout.max_range, trajectory.len())
}

pub fn load_scans_ply(path: impl AsRef<Path>, trajectory: &Trajectory) -> Result<ScanSet> {
    read_scans_ply(File::open(path)?, trajectory)
}

pub fn write_scans_ply<W: Write>(mut w: W, scans: &ScanSet) -> Result<()> {
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\ncomment max_range={}\nelement vertex {}\n\
         property double x\nproperty double y\nproperty double z\n\
         property uint pose_idx\nproperty uchar miss\nend_header\n",
        scans.max_range(),
        scans.ray_count()
    )?;
    for b in scans.bundles() {
        let idx = u32::try_from(b.pose_index).map_err(|_| fmt_err("pose index exceeds u32"))?;
        for r in &b.rays {
            let p = r.endpoint();
            for v in [p.x, p.y, p.z] {
                w.write_all(&v.to_le_bytes())?;
            }
            w.write_all(&idx.to_le_bytes())?;
            w.write_all(&[u8::from(!r.is_hit())])?;
        }
    }
    Ok(())
}

pub fn save_scans_ply(path: impl AsRef<Path>, scans: &ScanSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_scans_ply(&mut w, scans)?;
    w.flush()?;
    Ok(())
}
