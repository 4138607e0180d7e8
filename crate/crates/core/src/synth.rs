//! Synthetic garden scenes seen from above (aerial) and from a path on the
//! ground, with planted poses and noise for end-to-end checks.
//!
//! Visibility is analytic per primitive. The aerial view keeps upward-facing
//! surfaces (roofs, crown caps) and the ground not hidden under roofs or
//! crowns, sampled per horizontal square meter. The ground view keeps, within
//! `path_halfwidth` of the path line `y = 0`, the ground (under crowns too,
//! not under buildings), the walls that face the path, trunks and the sides
//! of crowns, sampled per square meter of surface.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cloud::{Matrix3, Point3, PointCloud, Vector3};
use crate::error::{Error, Result};
use crate::transform::RigidTransform;

/// Minimum `n_z` of a surface the aerial scanner sees.
const AERIAL_MIN_NZ: f64 = 0.26;
/// Crown band seen from the ground: `|n_z|` up to this value.
const GROUND_MAX_NZ: f64 = 0.7;
/// Walls are visible from the path unless they face away from it by more
/// than this cosine.
const WALL_FACING: f64 = -0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    Plane {
        z: f64,
    },
    /// Building: footprint centered at `(cx, cy)`, rotated by `yaw_deg`.
    Box {
        cx: f64,
        cy: f64,
        sx: f64,
        sy: f64,
        height: f64,
        yaw_deg: f64,
    },
    /// Tree crown: axis-aligned ellipsoid.
    Ellipsoid {
        center: Point3,
        radii: Vector3,
    },
    /// Trunk or pole standing on `z0`.
    Cylinder {
        cx: f64,
        cy: f64,
        z0: f64,
        radius: f64,
        height: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    /// Side of the square scene, centered on the origin.
    pub extent: f64,
    pub density_aerial: f64,
    pub density_ground: f64,
    pub path_halfwidth: f64,
    pub primitives: Vec<Primitive>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Viewpoint {
    Aerial,
    Ground,
}

impl FromStr for Viewpoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "aerial" => Ok(Viewpoint::Aerial),
            "ground" => Ok(Viewpoint::Ground),
            other => Err(Error::InvalidSpec(format!("unknown viewpoint `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    /// Maps the clean scene onto the perturbed cloud.
    pub transform: RigidTransform,
    pub noise_sigma: f64,
    /// Seeds the noise and dropout draws.
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return bad("extent must be positive");
        }
        if !(self.density_aerial > 0.0 && self.density_ground > 0.0) {
            return bad("densities must be positive");
        }
        if !(self.path_halfwidth > 0.0) {
            return bad("path half-width must be positive");
        }
        for p in &self.primitives {
            let ok = match *p {
                Primitive::Plane { z } => z.is_finite(),
                Primitive::Box { sx, sy, height, .. } => sx > 0.0 && sy > 0.0 && height > 0.0,
                Primitive::Ellipsoid { radii, .. } => radii.iter().all(|r| *r > 0.0),
                Primitive::Cylinder { radius, height, .. } => radius > 0.0 && height > 0.0,
            };
            if !ok {
                return bad("primitive sizes must be positive");
            }
        }
        Ok(())
    }

    fn ground_z(&self) -> Option<f64> {
        self.primitives.iter().find_map(|p| match p {
            Primitive::Plane { z } => Some(*z),
            _ => None,
        })
    }
}

/// The default garden: 200 m square, one ground plane, 4 buildings and 12
/// trees (ellipsoid crown on a cylinder trunk), 100 points/m² from the air
/// and 300 points/m² near the path.
pub fn default_scene(seed: u64) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut primitives = vec![Primitive::Plane { z: 0.0 }];
    // footprints as (x, y, clearance radius) to keep objects apart
    let mut taken: Vec<(f64, f64, f64)> = Vec::new();
    let free = |taken: &[(f64, f64, f64)], x: f64, y: f64, r: f64| {
        taken.iter().all(|&(tx, ty, tr)| (x - tx).hypot(y - ty) > r + tr + 4.0)
    };
    while taken.len() < 4 {
        let (cx, cy) = (rng.random_range(-75.0..75.0), rng.random_range(-40.0..40.0));
        let (sx, sy) = (rng.random_range(8.0..20.0f64), rng.random_range(8.0..20.0f64));
        let r = 0.5 * sx.hypot(sy);
        if !free(&taken, cx, cy, r) || cy.abs() < r + 3.0 {
            continue;
        }
        taken.push((cx, cy, r));
        primitives.push(Primitive::Box {
            cx,
            cy,
            sx,
            sy,
            height: rng.random_range(4.0..10.0),
            yaw_deg: rng.random_range(0.0..90.0),
        });
    }
    let mut trees = 0;
    while trees < 12 {
        let (x, y) = (rng.random_range(-90.0..90.0), rng.random_range(-90.0..90.0));
        let r = rng.random_range(2.5..5.0);
        if !free(&taken, x, y, r) {
            continue;
        }
        taken.push((x, y, r));
        let rz = rng.random_range(3.0..6.0);
        let trunk = rng.random_range(2.0..4.0);
        primitives.push(Primitive::Cylinder {
            cx: x,
            cy: y,
            z0: 0.0,
            radius: rng.random_range(0.3..0.5),
            height: trunk + 0.5 * rz,
        });
        primitives.push(Primitive::Ellipsoid {
            center: Point3::new(x, y, trunk + rz),
            radii: Vector3::new(r, r, rz),
        });
        trees += 1;
    }
    SceneSpec {
        seed,
        extent: 200.0,
        density_aerial: 100.0,
        density_ground: 300.0,
        path_halfwidth: 50.0,
        primitives,
    }
}

struct Footprint {
    center: (f64, f64),
    cos: f64,
    sin: f64,
    half: (f64, f64),
}

impl Footprint {
    fn of(cx: f64, cy: f64, sx: f64, sy: f64, yaw_deg: f64) -> Self {
        let (sin, cos) = yaw_deg.to_radians().sin_cos();
        Self {
            center: (cx, cy),
            cos,
            sin,
            half: (sx / 2.0, sy / 2.0),
        }
    }

    fn local(&self, x: f64, y: f64) -> (f64, f64) {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        (self.cos * dx + self.sin * dy, -self.sin * dx + self.cos * dy)
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let (u, v) = self.local(x, y);
        u.abs() <= self.half.0 && v.abs() <= self.half.1
    }

    fn world(&self, u: f64, v: f64) -> (f64, f64) {
        (
            self.center.0 + self.cos * u - self.sin * v,
            self.center.1 + self.sin * u + self.cos * v,
        )
    }
}

/// Width of the jitter window as a fraction of the cell. Neighboring samples
/// are then at most `1 + JITTER` cells apart, so a surface sampled that much
/// finer than the range-image pixel leaves no empty pixels.
const JITTER: f64 = 0.5;

/// `count` jittered samples over `[0, w] × [0, h]`, stratified on a grid
/// sized so cells are as square as possible.
fn jittered(rng: &mut ChaCha8Rng, w: f64, h: f64, density: f64, mut f: impl FnMut(f64, f64)) {
    let count = (density * w * h).round();
    if count < 1.0 || w <= 0.0 || h <= 0.0 {
        return;
    }
    let nx = ((count * w / h).sqrt().round() as usize).max(1);
    let ny = ((count / nx as f64).round() as usize).max(1);
    let (cw, ch) = (w / nx as f64, h / ny as f64);
    let total = count as usize;
    let cells = nx * ny;
    let mut visit = |cell: usize, rng: &mut ChaCha8Rng| {
        let (i, j) = (cell % nx, cell / nx);
        let x = (i as f64 + 0.5 + JITTER * (rng.random::<f64>() - 0.5)) * cw;
        let y = (j as f64 + 0.5 + JITTER * (rng.random::<f64>() - 0.5)) * ch;
        f(x, y);
    };
    if total >= cells {
        for cell in 0..cells {
            visit(cell, rng);
        }
        for _ in cells..total {
            let cell = rng.random_range(0..cells);
            visit(cell, rng);
        }
    } else {
        // rounding left a few cells too many: skip a random subset
        let mut chosen = rand::seq::index::sample(rng, cells, total).into_vec();
        chosen.sort_unstable();
        for cell in chosen {
            visit(cell, rng);
        }
    }
}

fn primitive_rng(seed: u64, k: usize, view: Viewpoint) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * k as u64 + matches!(view, Viewpoint::Ground) as u64);
    rng
}

/// Samples the scene as seen from `view`. Deterministic per `(spec, view)`.
pub fn generate_scene(spec: &SceneSpec, view: Viewpoint) -> Result<PointCloud> {
    spec.validate()?;
    let half = spec.extent / 2.0;
    let ground_z = spec.ground_z().unwrap_or(0.0);
    let buildings: Vec<Footprint> = spec
        .primitives
        .iter()
        .filter_map(|p| match *p {
            Primitive::Box { cx, cy, sx, sy, yaw_deg, .. } => Some(Footprint::of(cx, cy, sx, sy, yaw_deg)),
            _ => None,
        })
        .collect();
    let crowns: Vec<(Point3, Vector3)> = spec
        .primitives
        .iter()
        .filter_map(|p| match *p {
            Primitive::Ellipsoid { center, radii } => Some((center, radii)),
            _ => None,
        })
        .collect();
    let under_building = |x: f64, y: f64| buildings.iter().any(|b| b.contains(x, y));
    let under_crown = |x: f64, y: f64| {
        crowns
            .iter()
            .any(|(c, r)| ((x - c.x) / r.x).powi(2) + ((y - c.y) / r.y).powi(2) <= 1.0)
    };
    let in_band = |y: f64| y.abs() <= spec.path_halfwidth;
    let in_scene = |x: f64, y: f64| x.abs() <= half && y.abs() <= half;

    let mut pts: Vec<Point3> = Vec::new();
    for (k, prim) in spec.primitives.iter().enumerate() {
        let mut rng = primitive_rng(spec.seed, k, view);
        match (*prim, view) {
            (Primitive::Plane { z }, Viewpoint::Aerial) => {
                jittered(&mut rng, spec.extent, spec.extent, spec.density_aerial, |u, v| {
                    let (x, y) = (u - half, v - half);
                    if !under_building(x, y) && !under_crown(x, y) {
                        pts.push(Point3::new(x, y, z));
                    }
                });
            }
            (Primitive::Plane { z }, Viewpoint::Ground) => {
                let band = 2.0 * spec.path_halfwidth.min(half);
                jittered(&mut rng, spec.extent, band, spec.density_ground, |u, v| {
                    let (x, y) = (u - half, v - band / 2.0);
                    if !under_building(x, y) {
                        pts.push(Point3::new(x, y, z));
                    }
                });
            }
            (Primitive::Box { cx, cy, sx, sy, height, yaw_deg }, Viewpoint::Aerial) => {
                let fp = Footprint::of(cx, cy, sx, sy, yaw_deg);
                jittered(&mut rng, sx, sy, spec.density_aerial, |u, v| {
                    let (x, y) = fp.world(u - sx / 2.0, v - sy / 2.0);
                    pts.push(Point3::new(x, y, ground_z + height));
                });
            }
            (Primitive::Box { cx, cy, sx, sy, height, yaw_deg }, Viewpoint::Ground) => {
                let fp = Footprint::of(cx, cy, sx, sy, yaw_deg);
                // (local start, local direction, length, outward normal)
                let walls = [
                    ((-sx / 2.0, -sy / 2.0), (1.0, 0.0), sx, (0.0, -1.0)),
                    ((sx / 2.0, -sy / 2.0), (0.0, 1.0), sy, (1.0, 0.0)),
                    ((sx / 2.0, sy / 2.0), (-1.0, 0.0), sx, (0.0, 1.0)),
                    ((-sx / 2.0, sy / 2.0), (0.0, -1.0), sy, (-1.0, 0.0)),
                ];
                for (start, dir, len, normal) in walls {
                    let (_, my) = fp.world(start.0 + dir.0 * len / 2.0, start.1 + dir.1 * len / 2.0);
                    // outward normal's y component in world frame
                    let ny = fp.sin * normal.0 + fp.cos * normal.1;
                    let toward = if my > 0.0 { -1.0 } else { 1.0 };
                    if ny * toward < WALL_FACING || !in_band(my) {
                        continue;
                    }
                    jittered(&mut rng, len, height, spec.density_ground, |s, h| {
                        let (x, y) = fp.world(start.0 + dir.0 * s, start.1 + dir.1 * s);
                        if in_band(y) {
                            pts.push(Point3::new(x, y, ground_z + h));
                        }
                    });
                }
            }
            (Primitive::Ellipsoid { center, radii }, Viewpoint::Aerial) => {
                let (w, h) = (2.0 * radii.x, 2.0 * radii.y);
                jittered(&mut rng, w, h, spec.density_aerial, |u, v| {
                    let (dx, dy) = (u - radii.x, v - radii.y);
                    let q = 1.0 - (dx / radii.x).powi(2) - (dy / radii.y).powi(2);
                    if q <= 0.0 {
                        return;
                    }
                    let dz = radii.z * q.sqrt();
                    let n = Vector3::new(dx / radii.x.powi(2), dy / radii.y.powi(2), dz / radii.z.powi(2)).normalize();
                    if n.z >= AERIAL_MIN_NZ {
                        pts.push(Point3::new(center.x + dx, center.y + dy, center.z + dz));
                    }
                });
            }
            (Primitive::Ellipsoid { center, radii }, Viewpoint::Ground) => {
                // spheroid-like parametrization: azimuth × height, area
                // weighted by the local horizontal radius
                let r_mean = 0.5 * (radii.x + radii.y);
                jittered(&mut rng, TAU * r_mean, 2.0 * radii.z, spec.density_ground, |s, t| {
                    let phi = s / r_mean;
                    let zeta = t / radii.z - 1.0;
                    let ring = (1.0 - zeta * zeta).max(0.0).sqrt();
                    let p = Point3::new(
                        center.x + radii.x * ring * phi.cos(),
                        center.y + radii.y * ring * phi.sin(),
                        center.z + radii.z * zeta,
                    );
                    let d = p - center;
                    let n = Vector3::new(d.x / radii.x.powi(2), d.y / radii.y.powi(2), d.z / radii.z.powi(2)).normalize();
                    if n.z.abs() <= GROUND_MAX_NZ && in_band(p.y) {
                        pts.push(p);
                    }
                });
            }
            (Primitive::Cylinder { cx, cy, z0, radius, height }, Viewpoint::Ground) => {
                if !in_band(cy) {
                    continue;
                }
                jittered(&mut rng, TAU * radius, height, spec.density_ground, |s, h| {
                    let phi = s / radius;
                    pts.push(Point3::new(cx + radius * phi.cos(), cy + radius * phi.sin(), z0 + h));
                });
            }
            (Primitive::Cylinder { .. }, Viewpoint::Aerial) => {}
        }
    }
    pts.retain(|p| in_scene(p.x, p.y));
    if pts.is_empty() {
        return Err(Error::InvalidSpec("scene produced no visible points".into()));
    }
    PointCloud::new(pts)
}

/// Applies the planted transform, adds isotropic Gaussian noise and drops a
/// seeded random `dropout_fraction` of the points (original order kept).
pub fn perturb(cloud: &PointCloud, truth: &GroundTruth, dropout_fraction: f64) -> Result<PointCloud> {
    if !(0.0..1.0).contains(&dropout_fraction) {
        return Err(Error::InvalidFraction(dropout_fraction));
    }
    if !(truth.noise_sigma >= 0.0 && truth.noise_sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise sigma {}", truth.noise_sigma)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(truth.seed);
    let moved = crate::transform::apply_transform(cloud, &truth.transform);
    let n = moved.len();
    let drop = (dropout_fraction * n as f64).round() as usize;
    let mut keep = vec![true; n];
    for i in rand::seq::index::sample(&mut rng, n, drop) {
        keep[i] = false;
    }
    let (points, scalar, normals) = moved.into_parts();
    let noise = Normal::new(0.0, truth.noise_sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut out_pts = Vec::with_capacity(n - drop);
    for (i, p) in points.into_iter().enumerate() {
        if !keep[i] {
            continue;
        }
        if truth.noise_sigma > 0.0 {
            let d = Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
            out_pts.push(p + d);
        } else {
            out_pts.push(p);
        }
    }
    let mut out = PointCloud::new(out_pts)?;
    if let Some(s) = scalar {
        out = out.with_scalar(kept(s, &keep))?;
    }
    if let Some(nrm) = normals {
        out = out.with_normals(kept(nrm, &keep))?;
    }
    Ok(out)
}

fn kept<T>(values: Vec<T>, keep: &[bool]) -> Vec<T> {
    values.into_iter().zip(keep).filter(|(_, k)| **k).map(|(v, _)| v).collect()
}

/// Rotation (degrees) and translation (meters) of `estimated ∘ truth⁻¹`.
pub fn pose_error(estimated: &RigidTransform, truth: &RigidTransform) -> Result<(f64, f64)> {
    if !crate::transform::is_rotation(estimated.rotation()) || !crate::transform::is_rotation(truth.rotation()) {
        return Err(Error::InvalidRotation);
    }
    let e = estimated.compose(&truth.inverse());
    Ok((e.rotation_angle().to_degrees(), e.translation().norm()))
}

/// A planted pose for the scene pair: yaw within `±max_yaw_deg`, roll and
/// pitch within ±2°, horizontal shift up to `max_shift` and a small vertical
/// offset.
pub fn random_pose(seed: u64, max_yaw_deg: f64, max_shift: f64) -> RigidTransform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_9a7e);
    let yaw = rng.random_range(-max_yaw_deg..=max_yaw_deg).to_radians();
    let roll = rng.random_range(-2.0f64..=2.0).to_radians();
    let pitch = rng.random_range(-2.0f64..=2.0).to_radians();
    let heading = rng.random_range(0.0..TAU);
    let shift = max_shift * rng.random::<f64>().sqrt();
    let dz = rng.random_range(-1.0..=1.0);
    let horizontal = (shift * shift - dz * dz).max(0.0).sqrt();
    let r = nalgebra::Rotation3::from_euler_angles(roll, pitch, yaw);
    let m: Matrix3 = *r.matrix();
    RigidTransform::new(m, Vector3::new(horizontal * heading.cos(), horizontal * heading.sin(), dz))
        .expect("Euler angles give a rotation")
}

impl fmt::Display for SceneSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed={}", self.seed)?;
        writeln!(f, "extent={}", self.extent)?;
        writeln!(f, "density_aerial={}", self.density_aerial)?;
        writeln!(f, "density_ground={}", self.density_ground)?;
        writeln!(f, "path_halfwidth={}", self.path_halfwidth)?;
        for p in &self.primitives {
            match p {
                Primitive::Plane { z } => writeln!(f, "plane {z}")?,
                Primitive::Box { cx, cy, sx, sy, height, yaw_deg } => {
                    writeln!(f, "box {cx} {cy} {sx} {sy} {height} {yaw_deg}")?
                }
                Primitive::Ellipsoid { center, radii } => writeln!(
                    f,
                    "ellipsoid {} {} {} {} {} {}",
                    center.x, center.y, center.z, radii.x, radii.y, radii.z
                )?,
                Primitive::Cylinder { cx, cy, z0, radius, height } => {
                    writeln!(f, "cylinder {cx} {cy} {z0} {radius} {height}")?
                }
            }
        }
        Ok(())
    }
}

impl FromStr for SceneSpec {
    type Err = Error;

    /// `key=value` settings and one primitive per line; `#` starts a comment.
    fn from_str(text: &str) -> Result<Self> {
        let mut spec = SceneSpec {
            seed: 0,
            extent: 200.0,
            density_aerial: 100.0,
            density_ground: 300.0,
            path_halfwidth: 50.0,
            primitives: Vec::new(),
        };
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| Error::InvalidSpec(format!("line {}: {m}", n + 1));
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number `{s}`")));
            if let Some((key, value)) = line.split_once('=') {
                let value = value.trim();
                match key.trim() {
                    "seed" => spec.seed = value.parse().map_err(|_| err(format!("bad seed `{value}`")))?,
                    "extent" => spec.extent = num(value)?,
                    "density_aerial" => spec.density_aerial = num(value)?,
                    "density_ground" => spec.density_ground = num(value)?,
                    "path_halfwidth" => spec.path_halfwidth = num(value)?,
                    other => return Err(err(format!("unknown key `{other}`"))),
                }
                continue;
            }
            let mut words = line.split_whitespace();
            let kind = words.next().unwrap_or("");
            let v: Vec<f64> = words.map(num).collect::<Result<_>>()?;
            let want = |k: usize| {
                if v.len() == k {
                    Ok(())
                } else {
                    Err(err(format!("`{kind}` takes {k} numbers, got {}", v.len())))
                }
            };
            let prim = match kind {
                "plane" => {
                    want(1)?;
                    Primitive::Plane { z: v[0] }
                }
                "box" => {
                    want(6)?;
                    Primitive::Box { cx: v[0], cy: v[1], sx: v[2], sy: v[3], height: v[4], yaw_deg: v[5] }
                }
                "ellipsoid" => {
                    want(6)?;
                    Primitive::Ellipsoid {
                        center: Point3::new(v[0], v[1], v[2]),
                        radii: Vector3::new(v[3], v[4], v[5]),
                    }
                }
                "cylinder" => {
                    want(5)?;
                    Primitive::Cylinder { cx: v[0], cy: v[1], z0: v[2], radius: v[3], height: v[4] }
                }
                other => return Err(err(format!("unknown primitive `{other}`"))),
            };
            spec.primitives.push(prim);
        }
        spec.validate()?;
        Ok(spec)
    }
}
