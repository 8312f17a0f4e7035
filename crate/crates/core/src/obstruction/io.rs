//! Obstruction map CSV, `UAOB1` binary and false-colour PNG.
//!
//! `UAOB1` (little-endian): magic, origin as 2 x f64, cell size f64,
//! dims as 2 x u32, then per cell (x fastest) the score as f64 and the
//! ground height as f64.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::Vector2;

use super::ObstructionMap;
use crate::error::{Error, Result};
use crate::ground_filter::CellLayout;
use crate::meta::{format_meta, meta_get, parse_meta};
use crate::scalar::Real;

const MAGIC: &[u8; 5] = b"UAOB1";

fn layout_meta(l: &CellLayout) -> String {
    format_meta(&[
        ("origin_x", l.origin.x.to_string()),
        ("origin_y", l.origin.y.to_string()),
        ("cell_size", l.cell_size.to_string()),
        ("nx", l.dims[0].to_string()),
        ("ny", l.dims[1].to_string()),
    ])
}

/// `ix,iy,b,ground_z` rows preceded by a layout metadata comment.
pub fn write_obstruction_csv<T: Real, W: Write>(mut w: W, map: &ObstructionMap<T>) -> Result<()> {
    let l = map.layout();
    writeln!(w, "{}", layout_meta(l))?;
    writeln!(w, "ix,iy,b,ground_z")?;
    for k in 0..l.len() {
        let (i, j) = l.unindex(k);
        writeln!(w, "{i},{j},{},{}", map.scores()[k], map.ground_heights()[k])?;
    }
    Ok(())
}

pub fn read_obstruction_csv<T: Real, R: Read>(r: R) -> Result<ObstructionMap<T>> {
    let mut layout: Option<CellLayout> = None;
    let mut scores: Vec<Option<T>> = Vec::new();
    let mut ground = Vec::new();
    for (n, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let bad = |m: &str| Error::Format(format!("obstruction csv line {}: {m}", n + 1));
        if line.starts_with('#') {
            if let Some(m) = parse_meta(&line).filter(|m: &HashMap<String, String>| m.contains_key("cell_size")) {
                let l = CellLayout::new(
                    Vector2::new(meta_get(&m, "origin_x")?, meta_get(&m, "origin_y")?),
                    meta_get(&m, "cell_size")?,
                    [meta_get(&m, "nx")?, meta_get(&m, "ny")?],
                )?;
                scores = vec![None; l.len()];
                ground = vec![0.0; l.len()];
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
        let b: f64 = f[2].parse().map_err(|_| bad("bad score"))?;
        let k = l.index(i, j);
        scores[k] = Some(T::lit(b));
        ground[k] = f[3].parse().map_err(|_| bad("bad ground height"))?;
    }
    let layout = layout.ok_or_else(|| Error::Format("obstruction csv has no layout metadata".into()))?;
    let scores = scores
        .into_iter()
        .collect::<Option<Vec<T>>>()
        .ok_or_else(|| Error::Format("obstruction csv is missing cells".into()))?;
    ObstructionMap::from_scores(layout, scores, ground)
}

pub fn write_obstruction<T: Real, W: Write>(mut w: W, map: &ObstructionMap<T>) -> Result<()> {
    let l = map.layout();
    w.write_all(MAGIC)?;
    for v in [l.origin.x, l.origin.y, l.cell_size] {
        w.write_all(&v.to_le_bytes())?;
    }
    for d in l.dims {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for (b, g) in map.scores().iter().zip(map.ground_heights()) {
        w.write_all(&b.as_f64().to_le_bytes())?;
        w.write_all(&g.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_obstruction<T: Real, R: Read>(r: R) -> Result<ObstructionMap<T>> {
    let mut r = BufReader::new(r);
    let mut magic = [0u8; 5];
    let trunc = |_| Error::Format("UAOB1 stream truncated".into());
    r.read_exact(&mut magic).map_err(trunc)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a UAOB1 obstruction map".into()));
    }
    let mut f8 = [0u8; 8];
    let mut head = [0.0f64; 3];
    for v in head.iter_mut() {
        r.read_exact(&mut f8).map_err(trunc)?;
        *v = f64::from_le_bytes(f8);
    }
    let mut f4 = [0u8; 4];
    let mut dims = [0usize; 2];
    for d in dims.iter_mut() {
        r.read_exact(&mut f4).map_err(trunc)?;
        *d = u32::from_le_bytes(f4) as usize;
    }
    let layout = CellLayout::new(Vector2::new(head[0], head[1]), head[2], dims)?;
    let mut scores = Vec::with_capacity(layout.len());
    let mut ground = Vec::with_capacity(layout.len());
    for _ in 0..layout.len() {
        r.read_exact(&mut f8).map_err(trunc)?;
        scores.push(T::lit(f64::from_le_bytes(f8)));
        r.read_exact(&mut f8).map_err(trunc)?;
        ground.push(f64::from_le_bytes(f8));
    }
    ObstructionMap::from_scores(layout, scores, ground)
}

/// Green (free) through blue (uncertain) to red (obstructed).
fn ramp(b: f64) -> [u8; 3] {
    let b = b.clamp(0.0, 1.0);
    let lerp = |a: f64, c: f64, t: f64| (a + (c - a) * t).round() as u8;
    if b <= 0.5 {
        let t = b / 0.5;
        [0, lerp(200.0, 0.0, t), lerp(0.0, 255.0, t)]
    } else {
        let t = (b - 0.5) / 0.5;
        [lerp(0.0, 255.0, t), 0, lerp(255.0, 0.0, t)]
    }
}

/// RGB PNG, one pixel per cell, north (max y) up. `text` entries become
/// PNG tEXt chunks.
pub fn write_obstruction_png<T: Real, W: Write>(w: W, map: &ObstructionMap<T>, text: &[(&str, &str)]) -> Result<()> {
    let [nx, ny] = map.dims();
    let mut enc = png::Encoder::new(w, nx as u32, ny as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    for (k, v) in text {
        enc.add_text_chunk(k.to_string(), v.to_string())
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    let mut writer = enc.write_header().map_err(|e| Error::Format(e.to_string()))?;
    let mut data = Vec::with_capacity(nx * ny * 3);
    for row in (0..ny).rev() {
        for col in 0..nx {
            data.extend(ramp(map.scores()[map.layout().index(col, row)].as_f64()));
        }
    }
    writer.write_image_data(&data).map_err(|e| Error::Format(e.to_string()))?;
    writer.finish().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}
