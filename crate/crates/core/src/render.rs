//! Sphere-tracing renderer.
//!
//! The light sits at the camera center with no distance falloff, so the light
//! direction at a hit is the reversed viewing ray and the incidence angle θ
//! is the angle between the surface normal and that reversed ray.

use std::path::Path;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geom::Vec3;
use crate::imgio::{self, ColorImage, DepthMap, Domain, Entry, Manifest, MAX_DEPTH_MM};
use crate::scenegen::{camera_ray, sample_poses, sdf, Camera, Scene};

const HIT_EPS: f64 = 1e-4;
const MAX_STEPS: usize = 4096;
const NORMAL_H: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShadingSample {
    pub hit_point: Vec3,
    /// Unit surface normal facing into the lumen.
    pub normal: Vec3,
    pub ray_dir: Vec3,
    /// Ray length to the hit (mm).
    pub depth: f64,
    pub cos_theta: f64,
}

/// Sphere-traces the ray through pixel `(row, col)`. `None` when the surface
/// lies beyond the 100 mm ceiling.
pub fn trace(scene: &Scene, camera: &Camera, row: usize, col: usize) -> Option<ShadingSample> {
    let (origin, dir) = camera_ray(camera, row, col);
    trace_ray(scene, origin, dir)
}

pub fn trace_ray(scene: &Scene, origin: Vec3, dir: Vec3) -> Option<ShadingSample> {
    let mut t = 0.0;
    for _ in 0..MAX_STEPS {
        let s = sdf(scene, origin + dir * t);
        if s >= -HIT_EPS {
            // Close the remaining gap; still a safe step for a 1-Lipschitz field.
            if s < 0.0 {
                t -= s;
            }
            return shade(scene, origin, dir, t);
        }
        t -= s;
        if t > MAX_DEPTH_MM {
            return None;
        }
    }
    let s = sdf(scene, origin + dir * t);
    (s.abs() <= 1e-3 && t <= MAX_DEPTH_MM)
        .then(|| shade(scene, origin, dir, t))
        .flatten()
}

fn shade(scene: &Scene, origin: Vec3, dir: Vec3, t: f64) -> Option<ShadingSample> {
    if t > MAX_DEPTH_MM {
        return None;
    }
    let p = origin + dir * t;
    let g = Vec3::new(
        sdf(scene, p + Vec3::X * NORMAL_H) - sdf(scene, p - Vec3::X * NORMAL_H),
        sdf(scene, p + Vec3::Y * NORMAL_H) - sdf(scene, p - Vec3::Y * NORMAL_H),
        sdf(scene, p + Vec3::Z * NORMAL_H) - sdf(scene, p - Vec3::Z * NORMAL_H),
    );
    let outward = g.normalized();
    let normal = -outward;
    let cos_theta = outward.dot(dir).clamp(0.0, 1.0);
    Some(ShadingSample {
        hit_point: p,
        normal,
        ray_dir: dir,
        depth: t,
        cos_theta,
    })
}

fn trace_all(scene: &Scene, camera: &Camera, exec: Exec) -> Vec<Option<ShadingSample>> {
    let n = camera.resolution;
    exec.map(n * n, |i| trace(scene, camera, i / n, i % n))
}

/// Ground-truth depth map: ray length per pixel, 100 mm on a miss.
pub fn depth_map(scene: &Scene, camera: &Camera, exec: Exec) -> DepthMap {
    let n = camera.resolution;
    let data = trace_all(scene, camera, exec)
        .into_iter()
        .map(|s| s.map_or(MAX_DEPTH_MM, |s| s.depth))
        .collect();
    DepthMap::from_vec_clamped(n, n, data)
}

/// Pure diffuse render: gray value ρ cos θ on every channel. Missed pixels
/// are black with depth 100 mm.
pub fn render_lambertian(scene: &Scene, camera: &Camera, exec: Exec) -> Result<(ColorImage, DepthMap)> {
    if !scene.material.is_lambertian() {
        return Err(Error::contract(
            "render",
            "render_lambertian requires a material with no specular term, texture or tint",
        ));
    }
    let samples = trace_all(scene, camera, exec);
    let (img, _, depth) = compose(scene, camera, &samples, false)?;
    Ok((img, depth))
}

/// Dichromatic render with procedural texture: per channel
/// ρ·T·tint·cos θ + k_s·cos^α θ, clamped to [0, 1].
pub fn render_reallike(scene: &Scene, camera: &Camera, exec: Exec) -> Result<ColorImage> {
    let samples = trace_all(scene, camera, exec);
    let (_, img, _) = compose(scene, camera, &samples, true)?;
    Ok(img)
}

/// Both domains and the depth map from a single trace of `scene`. The
/// Lambertian image uses the scene's material stripped to its diffuse part.
pub fn render_pair(scene: &Scene, camera: &Camera, exec: Exec) -> Result<(ColorImage, ColorImage, DepthMap)> {
    let samples = trace_all(scene, camera, exec);
    compose(scene, camera, &samples, true)
}

fn compose(
    scene: &Scene,
    camera: &Camera,
    samples: &[Option<ShadingSample>],
    with_reallike: bool,
) -> Result<(ColorImage, ColorImage, DepthMap)> {
    let n = camera.resolution;
    let m = &scene.material;
    let mut lam = vec![0.0; n * n * 3];
    let mut real = vec![0.0; if with_reallike { n * n * 3 } else { 0 }];
    let mut depth = vec![MAX_DEPTH_MM; n * n];
    for (i, s) in samples.iter().enumerate() {
        let Some(s) = s else { continue };
        depth[i] = s.depth;
        let phi = lambertian_value(m.rho, s.cos_theta);
        lam[i * 3..i * 3 + 3].fill(phi);
        if with_reallike {
            let tex = texture(m.texture_seed, m.texture_amplitude, s.hit_point);
            let spec = m.spec_strength * s.cos_theta.powf(m.spec_exponent);
            for c in 0..3 {
                real[i * 3 + c] = (m.rho * tex * m.tint[c] * s.cos_theta + spec).clamp(0.0, 1.0);
            }
        }
    }
    let lam = ColorImage::from_vec(n, n, lam)?;
    let real = if with_reallike {
        ColorImage::from_vec(n, n, real)?
    } else {
        lam.clone()
    };
    Ok((lam, real, DepthMap::from_vec_clamped(n, n, depth)))
}

#[inline]
pub fn lambertian_value(rho: f64, cos_theta: f64) -> f64 {
    (rho * cos_theta).clamp(0.0, 1.0)
}

/// Ridged two-octave value noise in [1 − amplitude, 1].
pub fn texture(seed: u64, amplitude: f64, p: Vec3) -> f64 {
    if amplitude == 0.0 {
        return 1.0;
    }
    let base = 0.25;
    let r1 = ridge(value_noise(seed, p * base));
    let r2 = ridge(value_noise(seed.wrapping_add(0x51ED), p * (2.0 * base)));
    let combined = (2.0 * r1 + r2) / 3.0;
    1.0 - amplitude * (1.0 - combined)
}

#[inline]
fn ridge(n: f64) -> f64 {
    1.0 - (2.0 * n - 1.0).abs()
}

fn lattice(seed: u64, x: i64, y: i64, z: i64) -> f64 {
    let mut h = seed
        ^ (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ (z as u64).wrapping_mul(0x1656_67B1_9E37_79F9);
    // splitmix64 finalizer
    h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^= h >> 31;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(seed: u64, p: Vec3) -> f64 {
    let (fx, fy, fz) = (p.x.floor(), p.y.floor(), p.z.floor());
    let (ix, iy, iz) = (fx as i64, fy as i64, fz as i64);
    let s = |t: f64| t * t * (3.0 - 2.0 * t);
    let (u, v, w) = (s(p.x - fx), s(p.y - fy), s(p.z - fz));
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
    let c = |dx, dy, dz| lattice(seed, ix + dx, iy + dy, iz + dz);
    let x00 = lerp(c(0, 0, 0), c(1, 0, 0), u);
    let x10 = lerp(c(0, 1, 0), c(1, 1, 0), u);
    let x01 = lerp(c(0, 0, 1), c(1, 0, 1), u);
    let x11 = lerp(c(0, 1, 1), c(1, 1, 1), u);
    lerp(lerp(x00, x10, v), lerp(x01, x11, v), w)
}

/// Dataset layout settings for [`render_dataset`].
#[derive(Clone, Copy, Debug)]
pub struct DatasetSpec {
    pub poses_per_scene: usize,
    pub fov_deg: f64,
    pub resolution: usize,
    pub seed: u64,
}

/// Renders every pose of every scene into `out_dir` and returns the manifest
/// (also written to `out_dir/manifest.json`).
///
/// Each pose yields a Lambertian image paired with its depth map and a
/// real-like image of the same view. Real-like entries carry no depth path;
/// their scene and camera are recorded so ground truth can be re-traced.
pub fn render_dataset(scenes: &[Scene], spec: &DatasetSpec, out_dir: &Path, exec: Exec) -> Result<Manifest> {
    let mut entries = Vec::new();
    for (si, scene) in scenes.iter().enumerate() {
        let pose_seed = spec.seed.wrapping_mul(1_000_003).wrapping_add(si as u64);
        let cams = sample_poses(scene, spec.poses_per_scene, pose_seed, spec.fov_deg, spec.resolution)?;
        let lam_scene = scene.with_material(scene.material.to_lambertian())?;
        for (pi, cam) in cams.iter().enumerate() {
            let (_, real, _) = render_pair(scene, cam, exec)?;
            let (lam, depth) = render_lambertian(&lam_scene, cam, exec)?;
            let stem = format!("s{si:02}_p{pi:03}");
            let lam_path = format!("lambertian/{stem}.ppm");
            let depth_path = format!("depth/{stem}.pgm");
            let real_path = format!("reallike/{stem}.ppm");
            imgio::write_color(&out_dir.join(&lam_path), &lam)?;
            imgio::write_depth(&out_dir.join(&depth_path), &depth)?;
            imgio::write_color(&out_dir.join(&real_path), &real)?;
            entries.push(Entry {
                image: lam_path,
                depth: Some(depth_path),
                label: Some(scene.family),
                domain: Domain::Lambertian,
                scene: Some(scene.clone()),
                camera: Some(*cam),
            });
            entries.push(Entry {
                image: real_path,
                depth: None,
                label: Some(scene.family),
                domain: Domain::RealLike,
                scene: Some(scene.clone()),
                camera: Some(*cam),
            });
        }
    }
    let manifest = Manifest {
        seed: spec.seed,
        entries,
    };
    imgio::write_manifest(&manifest, &out_dir.join("manifest.json"))?;
    Ok(manifest)
}
