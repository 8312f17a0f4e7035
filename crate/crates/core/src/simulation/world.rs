//! Procedural forest worlds built from analytic primitives.

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng};

const TAU: f64 = std::f64::consts::TAU;

/// Ground surface `z = h(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Terrain {
    Flat { height: f64 },
    /// `base + amplitude sin(2πx/λ) cos(2πy/λ)`
    Sinusoidal { base: f64, amplitude: f64, wavelength: f64 },
}

impl Default for Terrain {
    fn default() -> Self {
        Terrain::Flat { height: 0.0 }
    }
}

impl Terrain {
    pub fn height(&self, x: f64, y: f64) -> f64 {
        match *self {
            Terrain::Flat { height } => height,
            Terrain::Sinusoidal { base, amplitude, wavelength } => {
                base + amplitude * (TAU * x / wavelength).sin() * (TAU * y / wavelength).cos()
            }
        }
    }

    pub fn max_height(&self) -> f64 {
        match *self {
            Terrain::Flat { height } => height,
            Terrain::Sinusoidal { base, amplitude, .. } => base + amplitude.abs(),
        }
    }

    pub fn min_height(&self) -> f64 {
        match *self {
            Terrain::Flat { height } => height,
            Terrain::Sinusoidal { base, amplitude, .. } => base - amplitude.abs(),
        }
    }

    /// First `t` in `(0, t_max]` where the unit ray `o + t d` reaches the surface.
    pub fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>, t_max: f64) -> Option<f64> {
        match *self {
            Terrain::Flat { height } => {
                if d.z >= 0.0 {
                    return None;
                }
                let t = (height - o.z) / d.z;
                (t > 0.0 && t <= t_max).then_some(t)
            }
            Terrain::Sinusoidal { .. } => {
                let f = |t: f64| {
                    let p = o + d * t;
                    p.z - self.height(p.x, p.y)
                };
                // Skip the stretch that is certainly above the surface.
                let top = self.max_height();
                let mut t0 = if o.z > top {
                    if d.z >= 0.0 {
                        return None;
                    }
                    (top - o.z) / d.z
                } else {
                    0.0
                };
                if f(t0) <= 0.0 {
                    return (t0 > 0.0).then_some(t0);
                }
                let step = 0.05;
                while t0 < t_max {
                    let t1 = (t0 + step).min(t_max);
                    if f(t1) <= 0.0 {
                        let (mut a, mut b) = (t0, t1);
                        for _ in 0..60 {
                            let m = 0.5 * (a + b);
                            if f(m) > 0.0 {
                                a = m;
                            } else {
                                b = m;
                            }
                        }
                        return Some(b);
                    }
                    if d.z >= 0.0 && (o + d * t1).z > top {
                        return None;
                    }
                    t0 = t1;
                }
                None
            }
        }
    }
}

/// Solid obstacle shapes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    /// Vertical cylinder standing on `base`.
    Cylinder { center: [f64; 2], base: f64, height: f64, radius: f64 },
    /// Axis-aligned ellipsoid.
    Ellipsoid { center: [f64; 3], radii: [f64; 3] },
    /// Box rotated by `yaw` about the vertical axis.
    Box { center: [f64; 3], half_extents: [f64; 3], yaw: f64 },
}

impl Primitive {
    /// Axis-aligned bounds `(min, max)`.
    pub fn aabb(&self) -> (Vector3<f64>, Vector3<f64>) {
        match *self {
            Primitive::Cylinder { center, base, height, radius } => (
                Vector3::new(center[0] - radius, center[1] - radius, base),
                Vector3::new(center[0] + radius, center[1] + radius, base + height),
            ),
            Primitive::Ellipsoid { center, radii } => {
                let (c, r) = (Vector3::from(center), Vector3::from(radii));
                (c - r, c + r)
            }
            Primitive::Box { center, half_extents: h, yaw } => {
                let (s, c) = yaw.sin_cos();
                let ex = (h[0] * c).abs() + (h[1] * s).abs();
                let ey = (h[0] * s).abs() + (h[1] * c).abs();
                let e = Vector3::new(ex, ey, h[2]);
                let c = Vector3::from(center);
                (c - e, c + e)
            }
        }
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        match *self {
            Primitive::Cylinder { center, base, height, radius } => {
                let dx = p.x - center[0];
                let dy = p.y - center[1];
                dx * dx + dy * dy <= radius * radius && p.z >= base && p.z <= base + height
            }
            Primitive::Ellipsoid { center, radii } => {
                (0..3).map(|a| ((p[a] - center[a]) / radii[a]).powi(2)).sum::<f64>() <= 1.0
            }
            Primitive::Box { center, half_extents: h, yaw } => {
                let l = to_box_frame(p - Vector3::from(center), yaw);
                (0..3).all(|a| l[a].abs() <= h[a])
            }
        }
    }

    /// Vertical extent `[z_lo, z_hi]` of the primitive above `(x, y)`, if any.
    pub fn vertical_span(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        match *self {
            Primitive::Cylinder { center, base, height, radius } => {
                let dx = x - center[0];
                let dy = y - center[1];
                (dx * dx + dy * dy <= radius * radius).then_some((base, base + height))
            }
            Primitive::Ellipsoid { center, radii } => {
                let u = ((x - center[0]) / radii[0]).powi(2) + ((y - center[1]) / radii[1]).powi(2);
                (u <= 1.0).then(|| {
                    let h = radii[2] * (1.0 - u).sqrt();
                    (center[2] - h, center[2] + h)
                })
            }
            Primitive::Box { center, half_extents: h, yaw } => {
                let l = to_box_frame(Vector3::new(x - center[0], y - center[1], 0.0), yaw);
                (l.x.abs() <= h[0] && l.y.abs() <= h[1]).then_some((center[2] - h[2], center[2] + h[2]))
            }
        }
    }

    /// Smallest `t` in `(0, t_max]` where the unit ray enters the primitive.
    pub fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>, t_max: f64) -> Option<f64> {
        let t = match *self {
            Primitive::Cylinder { center, base, height, radius } => {
                let (ox, oy) = (o.x - center[0], o.y - center[1]);
                let top = base + height;
                let mut best = f64::INFINITY;
                let a = d.x * d.x + d.y * d.y;
                if a > 1e-15 {
                    let b = 2.0 * (ox * d.x + oy * d.y);
                    let c = ox * ox + oy * oy - radius * radius;
                    let disc = b * b - 4.0 * a * c;
                    if disc >= 0.0 {
                        let sq = disc.sqrt();
                        for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                            let z = o.z + t * d.z;
                            if t > 0.0 && z >= base && z <= top {
                                best = best.min(t);
                            }
                        }
                    }
                }
                if d.z.abs() > 1e-15 {
                    for zc in [base, top] {
                        let t = (zc - o.z) / d.z;
                        let (x, y) = (ox + t * d.x, oy + t * d.y);
                        if t > 0.0 && x * x + y * y <= radius * radius {
                            best = best.min(t);
                        }
                    }
                }
                best
            }
            Primitive::Ellipsoid { center, radii } => {
                let r = Vector3::from(radii);
                let os = (o - Vector3::from(center)).component_div(&r);
                let ds = d.component_div(&r);
                let a = ds.norm_squared();
                let b = 2.0 * os.dot(&ds);
                let c = os.norm_squared() - 1.0;
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let (t0, t1) = ((-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a));
                if t0 > 0.0 {
                    t0
                } else {
                    t1
                }
            }
            Primitive::Box { center, half_extents: h, yaw } => {
                let lo = to_box_frame(o - Vector3::from(center), yaw);
                let ld = to_box_frame(*d, yaw);
                let (mut t_in, mut t_out) = (f64::NEG_INFINITY, f64::INFINITY);
                for a in 0..3 {
                    if ld[a].abs() < 1e-15 {
                        if lo[a].abs() > h[a] {
                            return None;
                        }
                        continue;
                    }
                    let t1 = (-h[a] - lo[a]) / ld[a];
                    let t2 = (h[a] - lo[a]) / ld[a];
                    t_in = t_in.max(t1.min(t2));
                    t_out = t_out.min(t1.max(t2));
                }
                if t_in > t_out {
                    return None;
                }
                if t_in > 0.0 {
                    t_in
                } else {
                    t_out
                }
            }
        };
        (t > 0.0 && t <= t_max).then_some(t)
    }
}

fn to_box_frame(v: Vector3<f64>, yaw: f64) -> Vector3<f64> {
    let (s, c) = yaw.sin_cos();
    Vector3::new(c * v.x + s * v.y, -s * v.x + c * v.y, v.z)
}

/// Slab test of a unit ray against an AABB over `[0, t_max]`.
fn hits_aabb(o: &Vector3<f64>, inv: &Vector3<f64>, lo: &Vector3<f64>, hi: &Vector3<f64>, t_max: f64) -> bool {
    let (mut t0, mut t1) = (0.0f64, t_max);
    for a in 0..3 {
        let ta = (lo[a] - o[a]) * inv[a];
        let tb = (hi[a] - o[a]) * inv[a];
        let (n, f) = if ta <= tb { (ta, tb) } else { (tb, ta) };
        if n.is_nan() || f.is_nan() {
            if o[a] < lo[a] || o[a] > hi[a] {
                return false;
            }
            continue;
        }
        t0 = t0.max(n);
        t1 = t1.min(f);
        if t0 > t1 {
            return false;
        }
    }
    true
}

#[derive(Deserialize)]
struct WorldFields {
    size: [f64; 2],
    terrain: Terrain,
    obstacles: Vec<Primitive>,
    seed: u64,
}

impl From<WorldFields> for World {
    fn from(f: WorldFields) -> Self {
        World::new(f.size, f.terrain, f.obstacles, f.seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "WorldFields")]
pub struct World {
    /// XY extent `[0, size_x] x [0, size_y]` in meters.
    pub size: [f64; 2],
    pub terrain: Terrain,
    pub obstacles: Vec<Primitive>,
    pub seed: u64,
    #[serde(skip)]
    boxes: Vec<(Vector3<f64>, Vector3<f64>)>,
}

impl World {
    pub fn new(size: [f64; 2], terrain: Terrain, obstacles: Vec<Primitive>, seed: u64) -> Self {
        let boxes = obstacles.iter().map(Primitive::aabb).collect();
        Self { size, terrain, obstacles, seed, boxes }
    }

    /// Highest obstacle or terrain point.
    pub fn max_height(&self) -> f64 {
        self.boxes.iter().map(|b| b.1.z).fold(self.terrain.max_height(), f64::max)
    }

    pub fn ground_height(&self, x: f64, y: f64) -> f64 {
        self.terrain.height(x, y)
    }

    /// Distance along the unit ray to the first surface within `max_range`.
    pub fn cast(&self, o: &Vector3<f64>, d: &Vector3<f64>, max_range: f64) -> Option<f64> {
        let mut best = self.terrain.intersect(o, d, max_range).unwrap_or(f64::INFINITY);
        if d.z >= 0.0 && o.z > self.max_height() {
            return best.is_finite().then_some(best);
        }
        let inv = d.map(|v| 1.0 / v);
        for (p, (lo, hi)) in self.obstacles.iter().zip(&self.boxes) {
            if !hits_aabb(o, &inv, lo, hi, best.min(max_range)) {
                continue;
            }
            if let Some(t) = p.intersect(o, d, best.min(max_range)) {
                best = best.min(t);
            }
        }
        (best <= max_range).then_some(best)
    }

    /// Inside an obstacle or below the terrain.
    pub fn is_solid(&self, p: &Vector3<f64>) -> bool {
        p.z < self.terrain.height(p.x, p.y) || self.obstacles.iter().any(|o| o.contains(p))
    }

    /// Whether any obstacle intersects the vertical segment from the ground
    /// to `clearance` above it at `(x, y)`.
    pub fn column_blocked(&self, x: f64, y: f64, clearance: f64) -> bool {
        let g = self.terrain.height(x, y);
        let (lo, hi) = (g, g + clearance);
        self.obstacles.iter().zip(&self.boxes).any(|(p, (bl, bh))| {
            x >= bl.x && x <= bh.x && y >= bl.y && y <= bh.y && bl.z <= hi && bh.z >= lo && {
                matches!(p.vertical_span(x, y), Some((a, b)) if a <= hi && b >= lo)
            }
        })
    }

    pub fn in_bounds(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= self.size[0] && y <= self.size[1]
    }
}

/// Parameters of [`generate_forest`]. Ranges are `[min, max]`, densities per m².
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub size: [f64; 2],
    pub terrain: Terrain,
    pub tree_density: f64,
    pub min_tree_spacing: f64,
    pub trunk_radius: [f64; 2],
    pub trunk_height: [f64; 2],
    pub canopy_radius: [f64; 2],
    pub canopy_depth: [f64; 2],
    pub log_density: f64,
    pub log_length: [f64; 2],
    pub log_radius: [f64; 2],
    pub bush_density: f64,
    pub bush_radius: [f64; 2],
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            size: [60.0, 60.0],
            terrain: Terrain::default(),
            tree_density: 0.02,
            min_tree_spacing: 2.0,
            trunk_radius: [0.15, 0.3],
            trunk_height: [8.0, 13.0],
            canopy_radius: [1.5, 3.0],
            canopy_depth: [1.5, 2.5],
            log_density: 0.004,
            log_length: [2.0, 5.0],
            log_radius: [0.2, 0.35],
            bush_density: 0.006,
            bush_radius: [0.5, 1.2],
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            self.trunk_radius,
            self.trunk_height,
            self.canopy_radius,
            self.canopy_depth,
            self.log_length,
            self.log_radius,
            self.bush_radius,
        ];
        let densities = [self.tree_density, self.log_density, self.bush_density, self.min_tree_spacing];
        if !(self.size[0] > 0.0 && self.size[1] > 0.0)
            || densities.iter().any(|d| !(*d >= 0.0))
            || ranges.iter().any(|r| !(r[0] > 0.0 && r[0] <= r[1]))
        {
            return Err(Error::InvalidParam("forest parameters must be positive with min <= max".into()));
        }
        Ok(())
    }
}

fn uniform(r: &mut impl Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        r.random_range(range[0]..range[1])
    }
}

fn poisson_count(r: &mut impl Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|p| p.sample(r) as usize).unwrap_or(0)
}

/// Position inside `[m, size - m]` on both axes.
fn position(r: &mut impl Rng, size: [f64; 2], margin: f64) -> Option<Vector2<f64>> {
    if 2.0 * margin >= size[0] || 2.0 * margin >= size[1] {
        return None;
    }
    Some(Vector2::new(r.random_range(margin..size[0] - margin), r.random_range(margin..size[1] - margin)))
}

/// Random forest: a Poisson number of trees (trunk plus canopy) placed with
/// a minimum spacing, then fallen logs and bushes on the ground. Every
/// primitive stays within the world's XY bounds.
pub fn generate_forest(params: &ForestParams, seed: u64) -> Result<World> {
    params.validate()?;
    let area = params.size[0] * params.size[1];
    let terrain = params.terrain;
    let mut obstacles = Vec::new();

    let mut r = rng(derive_seed(seed, 1));
    let n_trees = poisson_count(&mut r, params.tree_density * area);
    let mut trunks: Vec<Vector2<f64>> = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        let canopy_r = uniform(&mut r, params.canopy_radius);
        let margin = canopy_r.max(params.trunk_radius[1]);
        let mut placed = None;
        for _ in 0..100 {
            let Some(p) = position(&mut r, params.size, margin) else { break };
            if trunks.iter().all(|q| (q - p).norm() >= params.min_tree_spacing) {
                placed = Some(p);
                break;
            }
        }
        let Some(p) = placed else { continue };
        trunks.push(p);
        let radius = uniform(&mut r, params.trunk_radius);
        let height = uniform(&mut r, params.trunk_height);
        let depth = uniform(&mut r, params.canopy_depth);
        let base = terrain.height(p.x, p.y) - 0.2;
        obstacles.push(Primitive::Cylinder { center: [p.x, p.y], base, height: height + 0.2, radius });
        obstacles.push(Primitive::Ellipsoid {
            center: [p.x, p.y, base + height],
            radii: [canopy_r, canopy_r, depth],
        });
    }

    let mut r = rng(derive_seed(seed, 2));
    for _ in 0..poisson_count(&mut r, params.log_density * area) {
        let half_len = 0.5 * uniform(&mut r, params.log_length);
        let rad = uniform(&mut r, params.log_radius);
        let Some(p) = position(&mut r, params.size, half_len + rad) else { continue };
        let yaw = r.random_range(0.0..std::f64::consts::PI);
        let z = terrain.height(p.x, p.y) + rad;
        obstacles.push(Primitive::Box { center: [p.x, p.y, z], half_extents: [half_len, rad, rad], yaw });
    }

    let mut r = rng(derive_seed(seed, 3));
    for _ in 0..poisson_count(&mut r, params.bush_density * area) {
        let rad = uniform(&mut r, params.bush_radius);
        let Some(p) = position(&mut r, params.size, rad) else { continue };
        let rz = 0.7 * rad;
        let z = terrain.height(p.x, p.y) + 0.6 * rz;
        obstacles.push(Primitive::Ellipsoid { center: [p.x, p.y, z], radii: [rad, rad, rz] });
    }

    Ok(World::new(params.size, terrain, obstacles, seed))
}
