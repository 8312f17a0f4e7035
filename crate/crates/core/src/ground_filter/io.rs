use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::Vector2;

use super::{CellLayout, GroundHeightMap, HeightSource};
use crate::error::{Error, Result};
use crate::meta::{format_meta, meta_get, parse_meta};

/// Meters per PGM grey level.
pub const PGM_SCALE: f64 = 0.001;

/// 16-bit binary PGM. Level `v` encodes height `min_height + v * PGM_SCALE`;
/// both constants are recorded in header comments. Row 0 is the lowest y.
pub fn write_ground_pgm<W: Write>(mut w: W, map: &GroundHeightMap, comment: Option<&str>) -> Result<()> {
    let [nx, ny] = map.layout.dims;
    let lo = map.heights.iter().cloned().fold(f64::INFINITY, f64::min);
    writeln!(w, "P5")?;
    writeln!(w, "# min_height={lo} scale={PGM_SCALE}")?;
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{nx} {ny}\n65535")?;
    for j in 0..ny {
        for i in 0..nx {
            let v = ((map.height(i, j) - lo) / PGM_SCALE).round().clamp(0.0, 65535.0) as u16;
            w.write_all(&v.to_be_bytes())?;
        }
    }
    Ok(())
}

/// `ix,iy,height,source` rows preceded by a layout metadata comment.
pub fn write_ground_csv<W: Write>(mut w: W, map: &GroundHeightMap) -> Result<()> {
    let l = &map.layout;
    writeln!(
        w,
        "{}",
        format_meta(&[
            ("origin_x", l.origin.x.to_string()),
            ("origin_y", l.origin.y.to_string()),
            ("cell_size", l.cell_size.to_string()),
            ("nx", l.dims[0].to_string()),
            ("ny", l.dims[1].to_string()),
        ])
    )?;
    writeln!(w, "ix,iy,height,source")?;
    for k in 0..l.len() {
        let (i, j) = l.unindex(k);
        let src = match map.source[k] {
            HeightSource::Measured => "measured",
            HeightSource::Virtual => "virtual",
        };
        writeln!(w, "{i},{j},{},{src}", map.heights[k])?;
    }
    Ok(())
}

pub fn read_ground_csv<R: Read>(r: R) -> Result<GroundHeightMap> {
    let mut layout: Option<CellLayout> = None;
    let mut heights = Vec::new();
    let mut source = Vec::new();
    for (n, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let bad = |m: &str| Error::Format(format!("ground csv line {}: {m}", n + 1));
        if line.starts_with('#') {
            if let Some(m) = parse_meta(&line).filter(|m: &HashMap<String, String>| m.contains_key("cell_size")) {
                let l = CellLayout::new(
                    Vector2::new(meta_get(&m, "origin_x")?, meta_get(&m, "origin_y")?),
                    meta_get(&m, "cell_size")?,
                    [meta_get(&m, "nx")?, meta_get(&m, "ny")?],
                )?;
                heights = vec![f64::NAN; l.len()];
                source = vec![HeightSource::Virtual; l.len()];
                layout = Some(l);
            }
            continue;
        }
        if line.trim().is_empty() || line.starts_with("ix,") {
            continue;
        }
        let l = layout.as_ref().ok_or_else(|| bad("data before layout metadata"))?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        let i: usize = f[0].parse().map_err(|_| bad("bad ix"))?;
        let j: usize = f[1].parse().map_err(|_| bad("bad iy"))?;
        if i >= l.dims[0] || j >= l.dims[1] {
            return Err(bad("cell outside layout"));
        }
        let k = l.index(i, j);
        heights[k] = f[2].parse().map_err(|_| bad("bad height"))?;
        source[k] = match f[3] {
            "measured" => HeightSource::Measured,
            "virtual" => HeightSource::Virtual,
            _ => return Err(bad("bad source")),
        };
    }
    let layout = layout.ok_or_else(|| Error::Format("ground csv has no layout metadata".into()))?;
    if heights.iter().any(|h| h.is_nan()) {
        return Err(Error::Format("ground csv is missing cells".into()));
    }
    GroundHeightMap::new(layout, heights, source)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map() -> GroundHeightMap {
        let l = CellLayout::new(Vector2::new(-1.5, 2.0), 0.25, [3, 2]).unwrap();
        GroundHeightMap::new(
            l,
            vec![0.1, 0.2, 0.3, -0.4, 0.5, 1.0 / 3.0],
            vec![
                HeightSource::Measured,
                HeightSource::Virtual,
                HeightSource::Measured,
                HeightSource::Measured,
                HeightSource::Virtual,
                HeightSource::Measured,
            ],
        )
        .unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let mut buf = Vec::new();
        write_ground_csv(&mut buf, &map()).unwrap();
        assert_eq!(read_ground_csv(buf.as_slice()).unwrap(), map());
    }

    #[test]
    fn pgm_levels() {
        let mut buf = Vec::new();
        write_ground_pgm(&mut buf, &map(), Some("config_hash=abc")).unwrap();
        let text = String::from_utf8_lossy(&buf);
        assert!(text.starts_with("P5\n# min_height=-0.4 scale=0.001\n# config_hash=abc\n3 2\n65535\n"));
        let body = &buf[buf.len() - 12..];
        // Cell (0,0): 0.1 - (-0.4) = 0.5 m -> 500.
        assert_eq!(u16::from_be_bytes([body[0], body[1]]), 500);
        assert_eq!(u16::from_be_bytes([body[6], body[7]]), 0);
    }
}
