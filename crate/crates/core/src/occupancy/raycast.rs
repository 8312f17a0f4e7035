//! 6-connected voxel traversal of line segments (Amanatides & Woo).

use nalgebra::{Point3, Vector3};

use super::GridSpec;

pub type VoxelIndex = [i64; 3];

/// Visits every voxel of the unbounded lattice crossed by the segment
/// `from -> to`, both given in voxel units relative to the lattice origin.
///
/// The walk takes exactly one step per crossed boundary, so it always ends
/// in the voxel containing `to` and never repeats a voxel. When the segment
/// passes exactly through an edge or corner the axes are stepped one at a
/// time in x, y, z order.
pub(crate) fn walk_voxels(from: [f64; 3], to: [f64; 3], mut visit: impl FnMut(VoxelIndex)) {
    let mut cell = from.map(|v| v.floor() as i64);
    let end = to.map(|v| v.floor() as i64);
    let mut step = [0i64; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    let mut remaining = [0u64; 3];
    for a in 0..3 {
        let d = to[a] - from[a];
        remaining[a] = end[a].abs_diff(cell[a]);
        if remaining[a] == 0 {
            continue;
        }
        step[a] = if end[a] > cell[a] { 1 } else { -1 };
        t_delta[a] = 1.0 / d.abs();
        let boundary = if step[a] > 0 { cell[a] as f64 + 1.0 } else { cell[a] as f64 };
        t_max[a] = ((boundary - from[a]) / d).max(0.0);
    }
    visit(cell);
    loop {
        let mut axis = None;
        for a in 0..3 {
            if remaining[a] > 0 && axis.is_none_or(|b: usize| t_max[a] < t_max[b]) {
                axis = Some(a);
            }
        }
        let Some(a) = axis else { break };
        cell[a] += step[a];
        t_max[a] += t_delta[a];
        remaining[a] -= 1;
        visit(cell);
    }
}

/// Ordered voxel indices from the voxel containing `origin` to the voxel
/// containing `endpoint`. Indices are not restricted to the grid bounds.
pub fn traverse_ray(spec: &GridSpec, origin: &Point3<f64>, endpoint: &Point3<f64>) -> Vec<VoxelIndex> {
    let mut out = Vec::new();
    walk_voxels(spec.to_voxel_units(origin), spec.to_voxel_units(endpoint), |c| out.push(c));
    out
}

/// Parameter interval `[t0, t1] ⊆ [0, 1]` of the segment inside the grid box,
/// or `None` if the segment misses it.
pub(crate) fn clip_to_box(from: [f64; 3], to: [f64; 3], dims: [usize; 3]) -> Option<(f64, f64)> {
    let mut t0 = 0.0_f64;
    let mut t1 = 1.0_f64;
    for a in 0..3 {
        let d = to[a] - from[a];
        let hi = dims[a] as f64;
        if d == 0.0 {
            if from[a] < 0.0 || from[a] >= hi {
                return None;
            }
            continue;
        }
        let (mut ta, mut tb) = ((0.0 - from[a]) / d, (hi - from[a]) / d);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}

/// Walks the in-grid part of a world-frame segment. `visit` receives linear
/// indices of in-bounds voxels in traversal order plus a flag telling whether
/// the voxel contains the segment endpoint.
pub(crate) fn walk_clipped(
    spec: &GridSpec,
    origin: &Point3<f64>,
    end: &Point3<f64>,
    mut visit: impl FnMut(usize, bool),
) {
    let from = spec.to_voxel_units(origin);
    let to = spec.to_voxel_units(end);
    let Some((t0, t1)) = clip_to_box(from, to, spec.dims) else {
        return;
    };
    let lerp = |t: f64| -> [f64; 3] {
        let d = Vector3::from(to) - Vector3::from(from);
        (Vector3::from(from) + d * t).into()
    };
    let a = if t0 > 0.0 { lerp(t0) } else { from };
    let b = if t1 < 1.0 { lerp(t1) } else { to };
    let end_cell = to.map(|v| v.floor() as i64);
    walk_voxels(a, b, |c| {
        if let Some(i) = spec.linear_checked(c) {
            visit(i, c == end_cell);
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn spec() -> GridSpec {
        GridSpec::new(Vector3::zeros(), 0.25, [64, 64, 64]).unwrap()
    }

    /// Cells hit by sampling the segment every `voxel_size / 100`.
    fn supersample(spec: &GridSpec, a: &Point3<f64>, b: &Point3<f64>) -> Vec<VoxelIndex> {
        let len = (b - a).norm();
        let n = ((len / (spec.voxel_size / 100.0)).ceil() as usize).max(1);
        let mut out: Vec<VoxelIndex> = Vec::new();
        for i in 0..=n {
            let p = a + (b - a) * (i as f64 / n as f64);
            let c = spec.index_of(&p);
            if out.last() != Some(&c) {
                out.push(c);
            }
        }
        out
    }

    fn box_distance(spec: &GridSpec, c: VoxelIndex, a: &Point3<f64>, b: &Point3<f64>) -> f64 {
        // Distance from segment to closed voxel box, by dense sampling.
        let lo = spec.voxel_corner(c);
        let hi = lo + Vector3::repeat(spec.voxel_size);
        let n = 20_000;
        (0..=n)
            .map(|i| {
                let p = a + (b - a) * (i as f64 / n as f64);
                let q = Vector3::new(p.x.clamp(lo.x, hi.x), p.y.clamp(lo.y, hi.y), p.z.clamp(lo.z, hi.z));
                (p.coords - q).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn check_against_oracle(a: Point3<f64>, b: Point3<f64>) {
        let spec = spec();
        let got = traverse_ray(&spec, &a, &b);
        let oracle = supersample(&spec, &a, &b);
        // Oracle cells appear in order.
        let mut pos = 0;
        for c in &oracle {
            let found = got[pos..].iter().position(|g| g == c);
            assert!(found.is_some(), "oracle cell {c:?} missing from {got:?}");
            pos += found.unwrap();
        }
        // Extra cells only where the segment grazes an edge or corner.
        let oracle_set: HashSet<_> = oracle.iter().collect();
        for c in got.iter().filter(|c| !oracle_set.contains(c)) {
            assert!(box_distance(&spec, *c, &a, &b) < 1e-3, "cell {c:?} not touched");
        }
    }

    #[test]
    fn axis_aligned() {
        let got = traverse_ray(&spec(), &Point3::new(0.1, 0.1, 0.1), &Point3::new(0.9, 0.1, 0.1));
        assert_eq!(got, vec![[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]]);
    }

    #[test]
    fn degenerate_segment() {
        let p = Point3::new(1.3, 2.2, 0.7);
        assert_eq!(traverse_ray(&spec(), &p, &p), vec![[5, 8, 2]]);
    }

    #[test]
    fn diagonal_through_corners() {
        let a = Point3::new(0.1, 0.1, 0.1);
        let b = Point3::new(0.6, 0.6, 0.1);
        let got = traverse_ray(&spec(), &a, &b);
        assert_eq!(got.first(), Some(&[0, 0, 0]));
        assert_eq!(got.last(), Some(&[2, 2, 0]));
        assert_eq!(got.len(), 5);
        check_against_oracle(a, b);
    }

    #[test]
    fn negative_direction() {
        let got = traverse_ray(&spec(), &Point3::new(0.9, 0.1, 0.1), &Point3::new(-0.3, 0.1, 0.1));
        assert_eq!(got, vec![[3, 0, 0], [2, 0, 0], [1, 0, 0], [0, 0, 0], [-1, 0, 0], [-2, 0, 0]]);
    }

    #[test]
    fn clip_box_rejects_outside() {
        assert!(clip_to_box([-5.0, 1.0, 1.0], [-1.0, 1.0, 1.0], [4, 4, 4]).is_none());
        let (t0, t1) = clip_to_box([-4.0, 1.0, 1.0], [8.0, 1.0, 1.0], [4, 4, 4]).unwrap();
        assert!((t0 - 4.0 / 12.0).abs() < 1e-12 && (t1 - 8.0 / 12.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn walk_is_connected_and_matches_oracle(
            a in prop::array::uniform3(0.0f64..3.0),
            b in prop::array::uniform3(0.0f64..3.0),
        ) {
            let (a, b) = (Point3::from(a), Point3::from(b));
            let got = traverse_ray(&spec(), &a, &b);
            prop_assert_eq!(got[0], spec().index_of(&a));
            prop_assert_eq!(*got.last().unwrap(), spec().index_of(&b));
            let set: HashSet<_> = got.iter().collect();
            prop_assert_eq!(set.len(), got.len());
            for w in got.windows(2) {
                let d: i64 = (0..3).map(|k| (w[0][k] - w[1][k]).abs()).sum();
                prop_assert_eq!(d, 1);
            }
            check_against_oracle(a, b);
        }
    }
}
