//! Procedural hollow-organ scenes, their signed distance fields, and the
//! pinhole camera used to view them.
//!
//! A tube scene is the set of points within a varying radius of a
//! Catmull-Rom centerline. The centerline is sampled into a polyline whose
//! vertices advance monotonically along +z, which lets distance queries
//! prune segments by their z-extent. Folds modulate the radius along the
//! axial coordinate z; dividing by the worst-case slope keeps the field
//! 1-Lipschitz, which sphere tracing relies on.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Centerline samples per control-point interval.
const CENTERLINE_SUBDIV: usize = 40;
/// Spacing of the generated control points along z (mm).
const CONTROL_SPACING: f64 = 40.0;
/// Blend radius for the polyp/wall smooth union (mm).
const POLYP_BLEND: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub rho: f64,
    pub spec_strength: f64,
    pub spec_exponent: f64,
    pub texture_amplitude: f64,
    pub texture_seed: u64,
    /// Per-channel multiplier of the diffuse term. White for the Lambertian domain.
    #[serde(default = "white")]
    pub tint: [f64; 3],
}

fn white() -> [f64; 3] {
    [1.0; 3]
}

impl Material {
    pub fn lambertian(rho: f64) -> Self {
        Self {
            rho,
            spec_strength: 0.0,
            spec_exponent: 1.0,
            texture_amplitude: 0.0,
            texture_seed: 0,
            tint: white(),
        }
    }

    pub fn is_lambertian(&self) -> bool {
        self.spec_strength == 0.0 && self.texture_amplitude == 0.0 && self.tint == white()
    }

    /// The same surface with specular, texture and tint removed.
    pub fn to_lambertian(&self) -> Self {
        Self::lambertian(self.rho)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rho > 0.0
            && self.rho <= 1.0
            && self.spec_strength >= 0.0
            && self.spec_exponent >= 1.0
            && (0.0..1.0).contains(&self.texture_amplitude)
            && self.tint.iter().all(|c| (0.0..=1.0).contains(c));
        if ok {
            Ok(())
        } else {
            Err(Error::contract("scenegen", format!("invalid material {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polyp {
    pub center: Vec3,
    pub radius: f64,
}

/// Serialized description of a scene's geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Tube {
        centerline: Vec<Vec3>,
        base_radius: f64,
        fold_amplitude: f64,
        fold_frequency: f64,
        polyps: Vec<Polyp>,
    },
    /// Half-space whose boundary passes through `point`; `normal` points
    /// into the wall.
    Wall { point: Vec3, normal: Vec3 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct SceneDef {
    family: u8,
    shape: Shape,
    material: Material,
}

/// Immutable scene: geometry, material and anatomical family label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SceneDef", into = "SceneDef")]
pub struct Scene {
    pub family: u8,
    pub shape: Shape,
    pub material: Material,
    path: Polyline,
    lipschitz: f64,
}

impl TryFrom<SceneDef> for Scene {
    type Error = Error;
    fn try_from(d: SceneDef) -> Result<Self> {
        Scene::new(d.family, d.shape, d.material)
    }
}

impl From<Scene> for SceneDef {
    fn from(s: Scene) -> Self {
        SceneDef {
            family: s.family,
            shape: s.shape,
            material: s.material,
        }
    }
}

impl Scene {
    pub fn new(family: u8, shape: Shape, material: Material) -> Result<Self> {
        if family > 2 {
            return Err(Error::contract(
                "scenegen",
                format!("family {family} not in {{0, 1, 2}}"),
            ));
        }
        material.validate()?;
        let (path, lipschitz) = match &shape {
            Shape::Tube {
                centerline,
                base_radius,
                fold_amplitude,
                fold_frequency,
                polyps,
            } => {
                if *base_radius <= 0.0 {
                    return Err(Error::contract("scenegen", "base radius must be positive"));
                }
                if !(0.0..=0.5).contains(fold_amplitude) || *fold_frequency < 0.0 {
                    return Err(Error::contract("scenegen", "fold parameters out of range"));
                }
                if let Some(p) = polyps.iter().find(|p| p.radius <= 0.0 || p.radius >= *base_radius) {
                    return Err(Error::contract(
                        "scenegen",
                        format!("polyp radius {} must lie in (0, base radius)", p.radius),
                    ));
                }
                let path = Polyline::catmull_rom(centerline, CENTERLINE_SUBDIV)?;
                // |d r / d z| bound for r(z) = R (1 + a sin(2 pi f z)).
                let slope = base_radius * fold_amplitude * 2.0 * PI * fold_frequency;
                (path, 1.0 + slope)
            }
            Shape::Wall { normal, .. } => {
                if (normal.norm() - 1.0).abs() > 1e-9 {
                    return Err(Error::contract("scenegen", "wall normal must be unit length"));
                }
                (Polyline::default(), 1.0)
            }
        };
        Ok(Self {
            family,
            shape,
            material,
            path,
            lipschitz,
        })
    }

    /// Plane perpendicular to +z at `distance` mm, for a camera at the origin
    /// looking down +z.
    pub fn wall(distance: f64, material: Material) -> Result<Self> {
        Scene::new(
            0,
            Shape::Wall {
                point: Vec3::new(0.0, 0.0, distance),
                normal: Vec3::Z,
            },
            material,
        )
    }

    /// Straight fold-free tube along +z from z = -20 to z = `length`.
    pub fn straight_tube(radius: f64, length: f64, material: Material) -> Result<Self> {
        let n = ((length + 20.0) / CONTROL_SPACING).ceil().max(1.0) as usize;
        let centerline = (0..=n)
            .map(|i| Vec3::new(0.0, 0.0, -20.0 + (length + 20.0) * i as f64 / n as f64))
            .collect();
        Scene::new(
            0,
            Shape::Tube {
                centerline,
                base_radius: radius,
                fold_amplitude: 0.0,
                fold_frequency: 0.0,
                polyps: vec![],
            },
            material,
        )
    }

    pub fn with_material(&self, material: Material) -> Result<Self> {
        Scene::new(self.family, self.shape.clone(), material)
    }

    pub fn centerline_path(&self) -> &[Vec3] {
        &self.path.points
    }

    /// Largest discrete curvature (1/mm) of the sampled centerline.
    pub fn max_curvature(&self) -> f64 {
        self.path.max_curvature()
    }

    /// Point on the sampled centerline at axial coordinate `z`.
    pub fn centerline_at(&self, z: f64) -> Vec3 {
        self.path.at_z(z)
    }

    /// Unit centerline tangent at axial coordinate `z` (central difference).
    pub fn tangent_at(&self, z: f64) -> Vec3 {
        (self.path.at_z(z + 2.0) - self.path.at_z(z - 2.0)).normalized()
    }

    /// Local lumen radius at axial coordinate `z`.
    pub fn radius_at(&self, z: f64) -> f64 {
        match &self.shape {
            Shape::Tube {
                centerline,
                base_radius,
                fold_amplitude,
                fold_frequency,
                ..
            } => {
                let z0 = centerline.first().map_or(0.0, |p| p.z);
                base_radius * (1.0 + fold_amplitude * (2.0 * PI * fold_frequency * (z - z0)).sin())
            }
            Shape::Wall { .. } => f64::INFINITY,
        }
    }

    /// Axial coordinate of the far end of the centerline.
    pub fn end_z(&self) -> f64 {
        self.path.points.last().map_or(f64::INFINITY, |p| p.z)
    }
}

/// Signed distance (mm, up to the Lipschitz scaling of folded tubes) to the
/// lumen surface. Negative inside the lumen, positive in the wall.
pub fn sdf(scene: &Scene, p: Vec3) -> f64 {
    match &scene.shape {
        Shape::Wall { point, normal } => (p - *point).dot(*normal),
        Shape::Tube { polyps, .. } => {
            let tube = (scene.path.distance(p) - scene.radius_at(p.z)) / scene.lipschitz;
            polyps.iter().fold(tube, |acc, polyp| {
                let inside_polyp = (p - polyp.center).norm() - polyp.radius;
                smooth_max(acc, -inside_polyp, POLYP_BLEND)
            })
        }
    }
}

/// Polynomial smooth maximum. Its partial derivatives are non-negative and
/// sum to one, so it preserves the Lipschitz bound of its arguments.
fn smooth_max(a: f64, b: f64, k: f64) -> f64 {
    let h = (k - (a - b).abs()).max(0.0) / k;
    a.max(b) + h * h * k * 0.25
}

/// Monotone-in-z polyline used for centerline distance queries.
#[derive(Clone, Debug, Default, PartialEq)]
struct Polyline {
    points: Vec<Vec3>,
}

impl Polyline {
    fn catmull_rom(ctrl: &[Vec3], subdiv: usize) -> Result<Self> {
        if ctrl.len() < 2 {
            return Err(Error::contract(
                "scenegen",
                "centerline needs at least two control points",
            ));
        }
        if ctrl.windows(2).any(|w| w[1].z <= w[0].z) || ctrl.iter().any(|p| !p.is_finite()) {
            return Err(Error::contract(
                "scenegen",
                "centerline control points must advance strictly along +z",
            ));
        }
        let n = ctrl.len();
        let get = |i: isize| -> Vec3 {
            if i < 0 {
                ctrl[0] * 2.0 - ctrl[1]
            } else if i as usize >= n {
                ctrl[n - 1] * 2.0 - ctrl[n - 2]
            } else {
                ctrl[i as usize]
            }
        };
        let mut points = Vec::with_capacity((n - 1) * subdiv + 1);
        for i in 0..n - 1 {
            let (p0, p1, p2, p3) = (
                get(i as isize - 1),
                get(i as isize),
                get(i as isize + 1),
                get(i as isize + 2),
            );
            for s in 0..subdiv {
                let t = s as f64 / subdiv as f64;
                let t2 = t * t;
                let t3 = t2 * t;
                let q = (p1 * 2.0
                    + (p2 - p0) * t
                    + (p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3) * t2
                    + (p1 * 3.0 - p0 - p2 * 3.0 + p3) * t3)
                    * 0.5;
                points.push(q);
            }
        }
        points.push(ctrl[n - 1]);
        if points.windows(2).any(|w| w[1].z <= w[0].z) {
            return Err(Error::contract("scenegen", "sampled centerline is not monotone in z"));
        }
        Ok(Self { points })
    }

    fn distance(&self, p: Vec3) -> f64 {
        let pts = &self.points;
        let nseg = pts.len() - 1;
        // Segment whose z-range contains p.z (clamped to the ends).
        let k = pts.partition_point(|q| q.z <= p.z).clamp(1, nseg) - 1;
        let mut best = segment_distance(p, pts[k], pts[k + 1]);
        for j in (0..k).rev() {
            if p.z - pts[j + 1].z >= best {
                break;
            }
            best = best.min(segment_distance(p, pts[j], pts[j + 1]));
        }
        for j in k + 1..nseg {
            if pts[j].z - p.z >= best {
                break;
            }
            best = best.min(segment_distance(p, pts[j], pts[j + 1]));
        }
        best
    }

    fn at_z(&self, z: f64) -> Vec3 {
        let pts = &self.points;
        let nseg = pts.len() - 1;
        let k = pts.partition_point(|q| q.z <= z).clamp(1, nseg) - 1;
        let (a, b) = (pts[k], pts[k + 1]);
        let t = ((z - a.z) / (b.z - a.z)).clamp(0.0, 1.0);
        a + (b - a) * t
    }

    fn max_curvature(&self) -> f64 {
        self.points
            .windows(3)
            .map(|w| {
                let u = w[1] - w[0];
                let v = w[2] - w[1];
                let cos = (u.dot(v) / (u.norm() * v.norm())).clamp(-1.0, 1.0);
                cos.acos() / (0.5 * (u.norm() + v.norm()))
            })
            .fold(0.0, f64::max)
    }
}

#[inline]
fn segment_distance(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Pinhole camera. Rows run top to bottom, columns left to right.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: Vec3,
    pub forward: Vec3,
    pub up: Vec3,
    pub fov_deg: f64,
    pub resolution: usize,
}

impl Camera {
    pub const DEFAULT_FOV_DEG: f64 = 90.0;
    pub const DEFAULT_RESOLUTION: usize = 64;

    pub fn new(position: Vec3, forward: Vec3, up_hint: Vec3, fov_deg: f64, resolution: usize) -> Result<Self> {
        if !(fov_deg > 30.0 && fov_deg < 160.0) {
            return Err(Error::contract(
                "scenegen",
                format!("field of view {fov_deg} outside (30, 160)"),
            ));
        }
        if resolution == 0 {
            return Err(Error::contract("scenegen", "resolution must be positive"));
        }
        let forward = forward.normalized();
        let up = (up_hint - forward * up_hint.dot(forward)).normalized();
        if !forward.is_finite() || !up.is_finite() {
            return Err(Error::contract("scenegen", "degenerate camera frame"));
        }
        Ok(Self {
            position,
            forward,
            up,
            fov_deg,
            resolution,
        })
    }

    /// Camera at the origin looking down +z with +y up.
    pub fn looking_down_z(fov_deg: f64, resolution: usize) -> Result<Self> {
        Camera::new(Vec3::ZERO, Vec3::Z, Vec3::Y, fov_deg, resolution)
    }

    pub fn right(&self) -> Vec3 {
        self.forward.cross(self.up)
    }

    /// Ray through continuous image coordinates `(v, u)` where `(0, 0)` is
    /// the top-left corner of the image and `(res, res)` the bottom-right.
    pub fn ray_through(&self, v: f64, u: f64) -> (Vec3, Vec3) {
        let half = (self.fov_deg.to_radians() * 0.5).tan();
        let n = self.resolution as f64;
        let x = (2.0 * u / n - 1.0) * half;
        let y = (1.0 - 2.0 * v / n) * half;
        let dir = (self.forward + self.right() * x + self.up * y).normalized();
        (self.position, dir)
    }
}

/// Ray through the center of pixel `(row, col)`.
pub fn camera_ray(camera: &Camera, row: usize, col: usize) -> (Vec3, Vec3) {
    camera.ray_through(row as f64 + 0.5, col as f64 + 0.5)
}

/// Draws a scene of the given family. Deterministic in `(family, seed)`.
///
/// * 0 straight-wide: straight 400 mm tube, radius 17–21 mm.
/// * 1 curved-narrow: laterally bending 400 mm tube, radius 9–12 mm.
/// * 2 terminal-pouch: tube of radius 13–16 mm closed 60–75 mm down the axis.
pub fn make_scene(family: u8, seed: u64) -> Result<Scene> {
    if family > 2 {
        return Err(Error::contract(
            "scenegen",
            format!("family {family} not in {{0, 1, 2}}"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (family as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let (radius, end_z) = match family {
        0 => (rng.random_range(17.0..21.0), 400.0),
        1 => (rng.random_range(9.0..12.0), 400.0),
        _ => (rng.random_range(13.0..16.0), rng.random_range(60.0..75.0)),
    };
    let start_z = -40.0;
    let n_ctrl = ((end_z - start_z) / CONTROL_SPACING).ceil() as usize + 1;
    let spacing = (end_z - start_z) / (n_ctrl - 1) as f64;
    let (amp_x, amp_y, period, phase) = if family == 1 {
        (
            rng.random_range(14.0..20.0),
            rng.random_range(4.0..8.0),
            rng.random_range(140.0..180.0),
            rng.random_range(0.0..2.0 * PI),
        )
    } else {
        (0.0, 0.0, 1.0, 0.0)
    };
    let centerline: Vec<Vec3> = (0..n_ctrl)
        .map(|i| {
            let z = start_z + spacing * i as f64;
            // Bend starts at the camera region so the lumen is never straight ahead.
            let w = ((z - start_z) / 40.0).min(1.0);
            let arg = 2.0 * PI * z / period + phase;
            Vec3::new(
                w * amp_x * (arg.sin() - phase.sin()),
                w * amp_y * (arg.cos() - phase.cos()),
                z,
            )
        })
        .collect();
    let fold_amplitude = rng.random_range(0.04..0.12);
    let fold_frequency = 1.0 / rng.random_range(22.0..34.0);

    let mut polyps = Vec::new();
    let n_polyps = rng.random_range(0..=2usize);
    let path = Polyline::catmull_rom(&centerline, CENTERLINE_SUBDIV)?;
    for _ in 0..n_polyps {
        let z = rng.random_range(50.0..(end_z - 5.0).min(120.0));
        let angle = rng.random_range(0.0..2.0 * PI);
        let pr = radius * rng.random_range(0.2..0.35);
        let c = path.at_z(z);
        let dir = Vec3::new(angle.cos(), angle.sin(), 0.0);
        polyps.push(Polyp {
            center: c + dir * radius,
            radius: pr,
        });
    }

    let material = Material {
        rho: rng.random_range(0.6..0.9),
        spec_strength: rng.random_range(0.2..0.5),
        spec_exponent: rng.random_range(16.0..48.0),
        texture_amplitude: rng.random_range(0.3..0.6),
        texture_seed: rng.random(),
        tint: [1.0, rng.random_range(0.45..0.6), rng.random_range(0.35..0.5)],
    };
    Scene::new(
        family,
        Shape::Tube {
            centerline,
            base_radius: radius,
            fold_amplitude,
            fold_frequency,
            polyps,
        },
        material,
    )
}

/// Seeded fly-through poses: positions near the centerline in the first
/// 10–40 mm of the lumen, forward along the local tangent with up to 10°
/// of jitter.
pub fn sample_poses(scene: &Scene, n: usize, seed: u64, fov_deg: f64, resolution: usize) -> Result<Vec<Camera>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z_hi = 40.0f64.min(scene.end_z() - 35.0);
    (0..n)
        .map(|_| {
            let z = rng.random_range(10.0..z_hi);
            let r = scene.radius_at(z);
            let tangent = scene.tangent_at(z);
            let side = tangent.cross(Vec3::Y).normalized();
            let up0 = side.cross(tangent);
            let a = rng.random_range(0.0..2.0 * PI);
            let off = rng.random_range(0.0..0.2) * r;
            let pos = scene.centerline_at(z) + (side * a.cos() + up0 * a.sin()) * off;
            let tilt = rng.random_range(0.0..10f64).to_radians();
            let b = rng.random_range(0.0..2.0 * PI);
            let axis = side * b.cos() + up0 * b.sin();
            let forward = tangent.rotate(axis, tilt);
            Camera::new(pos, forward, Vec3::Y, fov_deg, resolution)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn make_scene_is_deterministic() {
        assert_eq!(make_scene(0, 7).unwrap(), make_scene(0, 7).unwrap());
        assert_ne!(make_scene(0, 7).unwrap(), make_scene(0, 8).unwrap());
    }

    #[test]
    fn family_shapes() {
        for seed in 0..5 {
            assert_eq!(make_scene(0, seed).unwrap().max_curvature(), 0.0);
            assert!(make_scene(1, seed).unwrap().max_curvature() > 0.0);
            let pouch = make_scene(2, seed).unwrap();
            let n = pouch.centerline_path().len();
            let end = pouch.centerline_path()[n - 1];
            let t = (end - pouch.centerline_path()[n - 2]).normalized();
            let beyond = end + t * (pouch.radius_at(end.z) * 1.6 + 5.0);
            assert!(sdf(&pouch, beyond) > 0.0);
        }
        assert!(make_scene(3, 0).is_err());
    }

    #[test]
    fn tube_centerline_and_wall_values() {
        let tube = Scene::straight_tube(12.0, 200.0, Material::lambertian(0.8)).unwrap();
        assert!((sdf(&tube, Vec3::new(0.0, 0.0, 40.0)) + 12.0).abs() < 1e-12);
        let on_surface = Vec3::new(12.0 * 0.6, 12.0 * 0.8, 55.0);
        assert!(sdf(&tube, on_surface).abs() < 1e-6);

        let wall = Scene::wall(50.0, Material::lambertian(0.8)).unwrap();
        assert!((sdf(&wall, Vec3::new(3.0, -2.0, 40.0)) + 10.0).abs() < 1e-12);
    }

    #[test]
    fn surface_point_found_by_bisection_is_zero() {
        let scene = make_scene(1, 3).unwrap();
        let c = scene.centerline_at(30.0);
        let dir = Vec3::new(0.3, 0.9, 0.1).normalized();
        let (mut lo, mut hi) = (0.0, 60.0);
        assert!(sdf(&scene, c) < 0.0 && sdf(&scene, c + dir * hi) > 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if sdf(&scene, c + dir * mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!(sdf(&scene, c + dir * lo).abs() < 1e-6);
    }

    #[test]
    fn sdf_is_one_lipschitz() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for family in 0..3 {
            let scene = make_scene(family, 5).unwrap();
            for _ in 0..1000 {
                let a = Vec3::new(
                    rng.random_range(-40.0..40.0),
                    rng.random_range(-40.0..40.0),
                    rng.random_range(-50.0..150.0),
                );
                let b = if rng.random_bool(0.5) {
                    a + Vec3::new(
                        rng.random_range(-2.0..2.0),
                        rng.random_range(-2.0..2.0),
                        rng.random_range(-2.0..2.0),
                    )
                } else {
                    Vec3::new(
                        rng.random_range(-40.0..40.0),
                        rng.random_range(-40.0..40.0),
                        rng.random_range(-50.0..150.0),
                    )
                };
                let lhs = (sdf(&scene, a) - sdf(&scene, b)).abs();
                assert!(
                    lhs <= (a - b).norm() + 1e-9,
                    "family {family}: {lhs} > {}",
                    (a - b).norm()
                );
            }
        }
    }

    #[test]
    fn camera_ray_geometry() {
        let cam = Camera::looking_down_z(90.0, 65).unwrap();
        let (_, d) = camera_ray(&cam, 32, 32);
        assert!((d - Vec3::Z).norm() < 1e-12);

        let (_, tl) = camera_ray(&cam, 0, 0);
        let (_, br) = camera_ray(&cam, 64, 64);
        let (_, tr) = camera_ray(&cam, 0, 64);
        let (_, bl) = camera_ray(&cam, 64, 0);
        assert!((tl.x + br.x).abs() < 1e-12 && (tl.y + br.y).abs() < 1e-12);
        assert!((tr.x + bl.x).abs() < 1e-12 && (tr.y + bl.y).abs() < 1e-12);
        assert!((tl.x + tr.x).abs() < 1e-12 && (tl.y - tr.y).abs() < 1e-12);

        let (_, edge) = camera_ray(&cam, 32, 64);
        let angle = edge.dot(cam.forward).acos().to_degrees();
        let half_pixel = 90.0 / 65.0 / 2.0;
        assert!((angle - 45.0).abs() <= half_pixel, "{angle}");
    }

    #[test]
    fn camera_frame_is_orthonormal() {
        let scene = make_scene(1, 2).unwrap();
        for cam in sample_poses(&scene, 20, 4, 90.0, 64).unwrap() {
            assert!((cam.forward.norm() - 1.0).abs() < 1e-12);
            assert!((cam.up.norm() - 1.0).abs() < 1e-12);
            assert!(cam.forward.dot(cam.up).abs() < 1e-12);
            assert!(sdf(&scene, cam.position) < 0.0);
        }
        assert!(Camera::looking_down_z(20.0, 64).is_err());
    }

    #[test]
    fn scene_json_roundtrip() {
        let scene = make_scene(2, 13).unwrap();
        let text = serde_json::to_string(&scene).unwrap();
        let back: Scene = serde_json::from_str(&text).unwrap();
        assert_eq!(back, scene);
    }

    #[test]
    fn rejects_bad_polyp() {
        let shape = Shape::Tube {
            centerline: vec![Vec3::ZERO, Vec3::Z * 40.0],
            base_radius: 5.0,
            fold_amplitude: 0.0,
            fold_frequency: 0.0,
            polyps: vec![Polyp {
                center: Vec3::ZERO,
                radius: 6.0,
            }],
        };
        assert!(Scene::new(0, shape, Material::lambertian(0.5)).is_err());
    }
}
