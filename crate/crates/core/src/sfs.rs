//! Variational shape from shading for the co-located-light Lambertian model.
//!
//! Unknowns are per-pixel depths `z` along the optical axis. A pixel's 3-D
//! point is `z·q` where `q` is its viewing ray scaled to unit forward
//! component; the normal comes from central differences of those points, and
//! the modeled intensity is `ρ·max(0, cos θ)`. The objective is
//!
//! ```text
//! Σ_data (ρ cos θ_p(z) − φ_p)²  +  w Σ_interior (∇² z)_p²  +  μ Σ ceiling violations²
//! ```
//!
//! Results are converted back to ray length, the convention of rendered depth.
//!
//! The data term is invariant under scaling all depths about the camera
//! center, so on its own the problem has no metric scale. The renderer's
//! 100 mm ceiling supplies it: a lit pixel lies within the ceiling, a black
//! (missed) pixel beyond it. The ceiling term enforces that, and the
//! initializer marches the surface outward from the silhouette where the two
//! meet. Images without missed pixels start from a constant depth and keep
//! its scale.
//!
//! Descent is first order with a backtracking line search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::imgio::{ColorImage, DepthMap, MAX_DEPTH_MM};
use crate::scenegen::{camera_ray, Camera};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SfsOptions {
    /// Weight of the squared-Laplacian smoothness penalty at full resolution.
    pub smoothness: f64,
    /// Weight of the depth-ceiling penalty.
    pub ceiling_weight: f64,
    /// Iteration cap.
    pub max_iterations: usize,
    /// Initial step for the line search.
    pub step_size: f64,
    /// Stop when the relative objective decrease over 50 accepted steps
    /// falls below this.
    pub tolerance: f64,
}

impl Default for SfsOptions {
    fn default() -> Self {
        Self {
            smoothness: 0.1,
            ceiling_weight: 1.0,
            max_iterations: 4000,
            step_size: 1.0,
            tolerance: 1e-7,
        }
    }
}

impl SfsOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 || !(self.step_size > 0.0) || self.smoothness < 0.0 || self.ceiling_weight < 0.0 {
            return Err(Error::contract("sfs", format!("invalid options {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThetaEstimate {
    /// Incidence angle in radians, in [0, π/2].
    pub theta: f64,
    /// Set when φ fell outside [0, ρ] and was clamped.
    pub clamped: bool,
}

/// Incidence angle from intensity: `θ = arccos(φ / ρ)`.
pub fn estimate_theta(phi: f64, rho: f64) -> Result<ThetaEstimate> {
    if !(rho > 0.0) {
        return Err(Error::contract("sfs", format!("reflectance {rho} must be positive")));
    }
    let clamped = phi < 0.0 || phi > rho * (1.0 + 1e-6);
    let ratio = (phi / rho).clamp(0.0, 1.0);
    Ok(ThetaEstimate {
        theta: ratio.acos(),
        clamped,
    })
}

#[derive(Clone, Debug)]
pub struct SfsResult {
    pub depth: DepthMap,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the objective became non-finite or the line search stalled.
    pub diverged: bool,
}

/// The shading problem on one grid: intensities, rays, and which pixels
/// carry data.
#[derive(Clone, Debug)]
pub struct SfsProblem {
    width: usize,
    height: usize,
    rho: f64,
    phi: Vec<f64>,
    /// Unit viewing rays.
    rays: Vec<Vec3>,
    /// Rays scaled so their forward component is 1.
    axial: Vec<Vec3>,
    /// Axial depth of the 100 mm ray-length ceiling.
    ceiling: Vec<f64>,
    lit: Vec<bool>,
    data_px: Vec<usize>,
    border_px: Vec<usize>,
    smoothness: f64,
    ceiling_weight: f64,
    half_fov_tan: f64,
}

impl SfsProblem {
    /// Builds the problem for a gray intensity grid (row-major) seen through
    /// `camera`. A pixel with intensity exactly 0 counts as missed.
    pub fn new(phi: Vec<f64>, camera: &Camera, rho: f64, smoothness: f64, ceiling_weight: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::contract("sfs", format!("reflectance {rho} must be positive")));
        }
        let n = camera.resolution;
        if phi.len() != n * n {
            return Err(Error::contract(
                "sfs",
                format!("{} intensities for a {n}x{n} camera", phi.len()),
            ));
        }
        let rays: Vec<Vec3> = (0..n * n).map(|i| camera_ray(camera, i / n, i % n).1).collect();
        let forward = camera.forward.normalized();
        let cos_axis: Vec<f64> = rays.iter().map(|d| d.dot(forward)).collect();
        let axial = rays.iter().zip(&cos_axis).map(|(&d, &c)| d / c).collect();
        let ceiling = cos_axis.iter().map(|c| MAX_DEPTH_MM * c).collect();
        let lit: Vec<bool> = phi.iter().map(|&v| v > 0.0).collect();
        let mut data_px = Vec::new();
        for r in 1..n.saturating_sub(1) {
            for c in 1..n - 1 {
                let i = r * n + c;
                if lit[i] && lit[i - 1] && lit[i + 1] && lit[i - n] && lit[i + n] {
                    data_px.push(i);
                }
            }
        }
        let mut border_px = Vec::new();
        for r in 0..n {
            for c in 0..n {
                let i = r * n + c;
                let missed_nb = (c > 0 && !lit[i - 1])
                    || (c + 1 < n && !lit[i + 1])
                    || (r > 0 && !lit[i - n])
                    || (r + 1 < n && !lit[i + n]);
                if lit[i] && missed_nb {
                    border_px.push(i);
                }
            }
        }
        Ok(Self {
            width: n,
            height: n,
            rho,
            phi,
            rays,
            axial,
            ceiling,
            lit,
            data_px,
            border_px,
            half_fov_tan: (camera.fov_deg.to_radians() * 0.5).tan(),
            // Penalties are measured on depth normalized by the ceiling so
            // their weights are commensurate with the intensity residuals.
            smoothness: smoothness / (MAX_DEPTH_MM * MAX_DEPTH_MM),
            ceiling_weight: ceiling_weight / (MAX_DEPTH_MM * MAX_DEPTH_MM),
        })
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lit(&self) -> &[bool] {
        &self.lit
    }

    /// Objective value and gradient at depths `t`.
    pub fn objective(&self, t: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let (w, h) = (self.width, self.height);
        let mut scratch;
        let grad = match grad {
            Some(g) => {
                g.fill(0.0);
                g
            }
            None => {
                scratch = vec![0.0; 0];
                &mut scratch[..]
            }
        };
        let want_grad = !grad.is_empty();
        let mut e = 0.0;

        for &i in &self.data_px {
            let (l, r, u, d) = (i - 1, i + 1, i - w, i + w);
            let q = &self.axial;
            let tx = q[r] * t[r] - q[l] * t[l];
            let ty = q[d] * t[d] - q[u] * t[u];
            let m = tx.cross(ty);
            let mn = m.norm();
            if mn == 0.0 {
                continue;
            }
            let view = self.rays[i];
            let cos = m.dot(view) / mn;
            let c = cos.max(0.0);
            let res = self.rho * c - self.phi[i];
            e += res * res;
            if want_grad && cos > 0.0 {
                let de_dc = 2.0 * res * self.rho;
                let g = view / mn - m * (m.dot(view) / (mn * mn * mn));
                let dc_dtx = ty.cross(g) * de_dc;
                let dc_dty = g.cross(tx) * de_dc;
                grad[r] += dc_dtx.dot(q[r]);
                grad[l] -= dc_dtx.dot(q[l]);
                grad[d] += dc_dty.dot(q[d]);
                grad[u] -= dc_dty.dot(q[u]);
            }
        }

        if self.smoothness > 0.0 {
            for row in 1..h.saturating_sub(1) {
                for col in 1..w - 1 {
                    let i = row * w + col;
                    let lap = t[i - 1] + t[i + 1] + t[i - w] + t[i + w] - 4.0 * t[i];
                    e += self.smoothness * lap * lap;
                    if want_grad {
                        let g = 2.0 * self.smoothness * lap;
                        grad[i - 1] += g;
                        grad[i + 1] += g;
                        grad[i - w] += g;
                        grad[i + w] += g;
                        grad[i] -= 4.0 * g;
                    }
                }
            }
        }

        if self.ceiling_weight > 0.0 {
            for (i, ((&ti, &lit), &cap)) in t.iter().zip(&self.lit).zip(&self.ceiling).enumerate() {
                let v = if lit { (ti - cap).max(0.0) } else { (ti - cap).min(0.0) };
                if v != 0.0 {
                    e += self.ceiling_weight * v * v;
                    if want_grad {
                        grad[i] += 2.0 * self.ceiling_weight * v;
                    }
                }
            }
        }
        e
    }

    /// Converts axial depths to ray lengths.
    pub fn to_ray_length(&self, z: &[f64]) -> DepthMap {
        let t = z.iter().zip(&self.axial).map(|(&z, q)| z * q.norm()).collect();
        DepthMap::from_vec_clamped(self.width, self.height, t)
    }

    /// Converts ray lengths to axial depths.
    pub fn to_axial(&self, depth: &DepthMap) -> Vec<f64> {
        depth.data.iter().zip(&self.axial).map(|(&t, q)| t / q.norm()).collect()
    }

    /// Runs single-level descent from axial depths `t`, in place.
    pub fn solve(&self, t: &mut [f64], opts: &SfsOptions) -> Result<SfsResult> {
        opts.validate()?;
        if t.len() != self.len() {
            return Err(Error::contract(
                "sfs",
                format!("{} depths for {} pixels", t.len(), self.len()),
            ));
        }
        let (objective, iterations, converged, diverged) = self.descend(t, opts);
        Ok(SfsResult {
            depth: self.to_ray_length(t),
            objective,
            iterations,
            converged,
            diverged,
        })
    }

    /// Gradient descent with backtracking from `t`, in place.
    ///
    /// Descent runs in log-depth `u = ln z`, which evens out the 1/z² spread
    /// of the data-term curvature; the objective itself is unchanged. Search
    /// directions are Polak-Ribière conjugate gradients, reset to steepest
    /// descent whenever they stop pointing downhill.
    fn descend(&self, t: &mut [f64], opts: &SfsOptions) -> (f64, usize, bool, bool) {
        let n = t.len();
        let mut grad = vec![0.0; n];
        let mut prev_grad = vec![0.0; n];
        let mut dir = vec![0.0; n];
        let mut trial = vec![0.0; n];
        let to_log = |grad: &mut [f64], t: &[f64]| grad.iter_mut().zip(t).for_each(|(g, &z)| *g *= z);
        let mut f = self.objective(t, Some(&mut grad));
        to_log(&mut grad, t);
        let mut step = opts.step_size;
        let mut window_start = f;
        let mut converged = false;
        let mut diverged = !f.is_finite();
        let mut iters = 0;
        let mut prev_gg = 0.0;
        while iters < opts.max_iterations && !diverged {
            iters += 1;
            let gg: f64 = grad.iter().map(|g| g * g).sum();
            if gg == 0.0 {
                converged = true;
                break;
            }
            let beta = if prev_gg > 0.0 {
                let num: f64 = grad.iter().zip(&prev_grad).map(|(g, p)| g * (g - p)).sum();
                (num / prev_gg).max(0.0)
            } else {
                0.0
            };
            for (d, &g) in dir.iter_mut().zip(&grad) {
                *d = -g + beta * *d;
            }
            let mut slope: f64 = dir.iter().zip(&grad).map(|(d, g)| d * g).sum();
            if slope >= 0.0 {
                for (d, &g) in dir.iter_mut().zip(&grad) {
                    *d = -g;
                }
                slope = -gg;
            }
            let mut accepted = false;
            for _ in 0..60 {
                for ((x, &t0), &d) in trial.iter_mut().zip(t.iter()).zip(&dir) {
                    *x = t0 * (step * d).exp();
                }
                let ft = self.objective(&trial, None);
                if ft.is_finite() && ft <= f + 1e-4 * step * slope {
                    accepted = true;
                    t.copy_from_slice(&trial);
                    prev_grad.copy_from_slice(&grad);
                    prev_gg = gg;
                    f = self.objective(t, Some(&mut grad));
                    to_log(&mut grad, t);
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                // No decrease at any step length: a (numerical) stationary point.
                converged = gg.sqrt() < 1e-6 * (1.0 + f);
                diverged = !converged;
                break;
            }
            if iters % 50 == 0 {
                if window_start - f <= opts.tolerance * window_start.abs().max(1e-300) {
                    converged = true;
                    break;
                }
                window_start = f;
            }
        }
        (f, iters, converged, diverged)
    }
}

/// Reconstructs ray-length depth from a Lambertian rendering with known ρ.
///
/// Starts from [`sweep_init`] when the image has a silhouette, otherwise from
/// the constant `100·(1 − mean φ / ρ)`.
pub fn sfs_reconstruct(image: &ColorImage, camera: &Camera, rho: f64, opts: &SfsOptions) -> Result<SfsResult> {
    opts.validate()?;
    if !(rho > 0.0) {
        return Err(Error::contract("sfs", format!("reflectance {rho} must be positive")));
    }
    if image.width != camera.resolution || image.height != camera.resolution {
        return Err(Error::contract(
            "sfs",
            format!(
                "{}x{} image does not match the {}-pixel camera",
                image.width, image.height, camera.resolution
            ),
        ));
    }
    let phi = image.luminance();
    let problem = SfsProblem::new(phi, camera, rho, opts.smoothness, opts.ceiling_weight)?;
    let mut z = sweep_init(&problem).unwrap_or_else(|| {
        let mean = problem.phi.iter().sum::<f64>() / problem.len() as f64;
        vec![(MAX_DEPTH_MM * (1.0 - mean / rho)).clamp(1.0, MAX_DEPTH_MM); problem.len()]
    });
    problem.solve(&mut z, opts)
}

/// Log-depth initialization by Lax-Friedrichs fast sweeping.
///
/// With `P = z·(x, y, 1)` and `u = ln z`, the modeled shading depends on
/// `∇u` alone: `cos θ = 1 / (|q|·|m|)` with
/// `m = (−u_x, −u_y, 1 + x·u_x + y·u_y)`. Lit pixels next to a missed pixel
/// are pinned at the ceiling and the eikonal-like equation
/// `|m| = ρ / (|q|·φ)` is marched outward from them. Returns `None` when the
/// image has no silhouette to start from.
pub fn sweep_init(problem: &SfsProblem) -> Option<Vec<f64>> {
    let n = problem.width;
    if problem.border_px.is_empty() {
        return None;
    }
    let (phi, rho) = (&problem.phi, problem.rho);
    let half = problem.half_fov_tan;
    let h = 2.0 * half / n as f64;
    let coord = |k: usize| (2.0 * (k as f64 + 0.5) / n as f64 - 1.0) * half;
    const UNSET: f64 = 50.0;
    // w = −ln z grows away from the silhouette.
    let mut w = vec![UNSET; n * n];
    let mut fixed = vec![false; n * n];
    for &i in &problem.border_px {
        w[i] = -problem.ceiling[i].ln();
        fixed[i] = true;
    }
    let rhs: Vec<f64> = (0..n * n)
        .map(|i| {
            let q = problem.axial[i].norm();
            let c = (phi[i] / rho).clamp(1e-3, 1.0);
            1.0 / (q * c)
        })
        .collect();
    let at = |w: &[f64], r: isize, c: isize, r0: usize, c0: usize| -> f64 {
        // Linear extrapolation across the image frame and into missed pixels.
        let inside = |r: isize, c: isize| r >= 0 && c >= 0 && (r as usize) < n && (c as usize) < n;
        if inside(r, c) && problem.lit[r as usize * n + c as usize] {
            return w[r as usize * n + c as usize];
        }
        let (dr, dc) = (r0 as isize - r, c0 as isize - c);
        let (r2, c2) = (r0 as isize + dr, c0 as isize + dc);
        let w0 = w[r0 * n + c0];
        if inside(r2, c2) && problem.lit[r2 as usize * n + c2 as usize] {
            2.0 * w0 - w[r2 as usize * n + c2 as usize]
        } else {
            w0
        }
    };
    // Silhouette crossings sit half a pixel beyond the pinned pixels; the
    // pins are re-derived from the marched slope a few times.
    let mut pins: Vec<(usize, usize, f64)> = Vec::new();
    for &i in &problem.border_px {
        let (r, c) = (i / n, i % n);
        let mut inner = None;
        for (dr, dc) in [(0isize, 1isize), (0, -1), (1, 0), (-1, 0)] {
            let (rm, cm) = (r as isize + dr, c as isize + dc);
            let (ri, ci) = (r as isize - dr, c as isize - dc);
            let inside = |r: isize, c: isize| r >= 0 && c >= 0 && (r as usize) < n && (c as usize) < n;
            if inside(rm, cm) && !problem.lit[rm as usize * n + cm as usize] && inside(ri, ci) {
                let j = ri as usize * n + ci as usize;
                if problem.lit[j] {
                    let cap = 0.5 * (problem.ceiling[i] + problem.ceiling[rm as usize * n + cm as usize]);
                    inner = Some((j, -cap.ln()));
                    break;
                }
            }
        }
        if let Some((j, sil)) = inner {
            pins.push((i, j, sil));
        }
    }
    for _round in 0..8 {
        for wi in w.iter_mut().zip(&fixed).filter(|(_, &f)| !f) {
            *wi.0 = UNSET;
        }
        let orders: [(bool, bool); 4] = [(false, false), (true, false), (false, true), (true, true)];
        for _sweep in 0..400 {
            let mut change = 0.0f64;
            for &(rev_r, rev_c) in &orders {
                for rr in 0..n {
                    let r = if rev_r { n - 1 - rr } else { rr };
                    for cc in 0..n {
                        let c = if rev_c { n - 1 - cc } else { cc };
                        let i = r * n + c;
                        if fixed[i] || !problem.lit[i] {
                            continue;
                        }
                        let (ri, ci) = (r as isize, c as isize);
                        let we = at(&w, ri, ci + 1, r, c);
                        let ww = at(&w, ri, ci - 1, r, c);
                        let wn = at(&w, ri - 1, ci, r, c);
                        let ws = at(&w, ri + 1, ci, r, c);
                        let (x, y) = (coord(c), -coord(r));
                        let p1 = (we - ww) / (2.0 * h);
                        let p2 = (wn - ws) / (2.0 * h);
                        let a = 1.0 - x * p1 - y * p2;
                        let ham = (p1 * p1 + p2 * p2 + a * a).sqrt();
                        let sigma = problem.axial[i].norm();
                        let cand = (rhs[i] - ham + sigma * (we + ww + wn + ws) / (2.0 * h)) / (2.0 * sigma / h);
                        if cand < w[i] {
                            change = change.max(w[i] - cand);
                            w[i] = cand;
                        }
                    }
                }
            }
            if change < 1e-9 {
                break;
            }
        }
        let mut moved = 0.0f64;
        for &(i, j, sil) in &pins {
            let pinned = (2.0 * sil + w[j]) / 3.0;
            if w[j] < UNSET {
                moved = moved.max((pinned - w[i]).abs());
                w[i] = pinned;
            }
        }
        if moved < 1e-9 {
            break;
        }
    }
    Some(
        w.iter()
            .zip(&problem.lit)
            .zip(&problem.ceiling)
            .map(|((&w, &lit), &cap)| if lit && w < UNSET { (-w).exp() } else { cap })
            .collect(),
    )
}

/// Root-mean-square difference over pixels where `mask` is set.
pub fn masked_rmse(a: &DepthMap, b: &DepthMap, mask: &[bool]) -> f64 {
    let (mut s, mut k) = (0.0, 0usize);
    for ((x, y), &m) in a.data.iter().zip(&b.data).zip(mask) {
        if m {
            s += (x - y) * (x - y);
            k += 1;
        }
    }
    (s / k.max(1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Exec;
    use crate::render::{render_lambertian, render_pair};
    use crate::scenegen::{Material, Scene};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};

    #[test]
    fn theta_reference_values() {
        assert_eq!(estimate_theta(0.7, 0.7).unwrap().theta, 0.0);
        assert!((estimate_theta(0.0, 0.7).unwrap().theta - FRAC_PI_2).abs() < 1e-15);
        assert!((estimate_theta(0.35, 0.7).unwrap().theta - FRAC_PI_3).abs() < 1e-12);
        let over = estimate_theta(0.8, 0.7).unwrap();
        assert!(over.clamped && over.theta == 0.0);
        let under = estimate_theta(-0.1, 0.7).unwrap();
        assert!(under.clamped && (under.theta - FRAC_PI_2).abs() < 1e-15);
        assert!(!estimate_theta(0.7 * (1.0 + 1e-7), 0.7).unwrap().clamped);
        assert!(estimate_theta(0.5, 0.0).is_err());
    }

    #[test]
    fn wall_is_a_stationary_point() {
        let cam = Camera::looking_down_z(90.0, 32).unwrap();
        let scene = Scene::wall(50.0, Material::lambertian(0.8)).unwrap();
        let (img, truth) = render_lambertian(&scene, &cam, Exec::Sequential).unwrap();
        let problem = SfsProblem::new(img.luminance(), &cam, 0.8, 0.1, 1.0).unwrap();
        let mut z = vec![50.0; 32 * 32];
        let res = problem.solve(&mut z, &SfsOptions::default()).unwrap();
        let lit = vec![true; 32 * 32];
        let moved = masked_rmse(&res.depth, &truth, &lit);
        assert!(moved < 1e-3, "moved {moved}");
        assert!(!res.diverged);
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        let scene = Scene::straight_tube(12.0, 300.0, Material::lambertian(0.8)).unwrap();
        let cam = Camera::looking_down_z(90.0, 24).unwrap();
        let (img, truth) = render_lambertian(&scene, &cam, Exec::Sequential).unwrap();
        let problem = SfsProblem::new(img.luminance(), &cam, 0.8, 0.1, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let t: Vec<f64> = problem
                .to_axial(&truth)
                .iter()
                .map(|d| d * rng.random_range(0.9..1.1) + rng.random_range(-2.0..2.0))
                .collect();
            let mut g = vec![0.0; t.len()];
            problem.objective(&t, Some(&mut g));
            let mut x = t.clone();
            let h = 1e-4;
            let mut diff = 0.0;
            let mut norm = 0.0f64;
            for i in 0..x.len() {
                x[i] = t[i] + h;
                let up = problem.objective(&x, None);
                x[i] = t[i] - h;
                let dn = problem.objective(&x, None);
                x[i] = t[i];
                let fd = (up - dn) / (2.0 * h);
                diff += (fd - g[i]).powi(2);
                norm = norm.max(fd.abs()).max(g[i].abs());
            }
            let rel = diff.sqrt() / (norm * (x.len() as f64).sqrt()).max(1e-300);
            assert!(rel < 1e-3, "relative error {rel}");
        }
    }

    #[test]
    fn objective_changes_under_depth_shift() {
        let scene = Scene::straight_tube(12.0, 300.0, Material::lambertian(0.8)).unwrap();
        let cam = Camera::looking_down_z(90.0, 32).unwrap();
        let (img, truth) = render_lambertian(&scene, &cam, Exec::Sequential).unwrap();
        let problem = SfsProblem::new(img.luminance(), &cam, 0.8, 0.0, 0.0).unwrap();
        let z = problem.to_axial(&truth);
        let base = problem.objective(&z, None);
        let shifted: Vec<f64> = z.iter().map(|d| d + 5.0).collect();
        assert!(problem.objective(&shifted, None) > base + 1e-6);
    }

    #[test]
    fn bad_inputs() {
        let cam = Camera::looking_down_z(90.0, 16).unwrap();
        let img = ColorImage::new(16, 16).unwrap();
        assert!(sfs_reconstruct(&img, &cam, 0.0, &SfsOptions::default()).is_err());
        let small = Camera::looking_down_z(90.0, 8).unwrap();
        assert!(sfs_reconstruct(&img, &small, 0.5, &SfsOptions::default()).is_err());
        let opts = SfsOptions {
            max_iterations: 0,
            ..SfsOptions::default()
        };
        assert!(sfs_reconstruct(&img, &cam, 0.5, &opts).is_err());
    }

    fn tube_pair(n: usize, texture_seed: u64) -> (ColorImage, ColorImage, DepthMap, Camera) {
        let cam = Camera::looking_down_z(90.0, n).unwrap();
        let real = Material {
            rho: 0.8,
            spec_strength: 0.4,
            spec_exponent: 20.0,
            texture_amplitude: 0.5,
            texture_seed,
            tint: [1.0; 3],
        };
        let scene = Scene::straight_tube(12.0, 400.0, real).unwrap();
        let (lam, real, depth) = render_pair(&scene, &cam, Exec::Sequential).unwrap();
        (lam, real, depth, cam)
    }

    #[test]
    fn sweep_init_lands_near_the_tube() {
        let (lam, _, truth, cam) = tube_pair(64, 0);
        let problem = SfsProblem::new(lam.luminance(), &cam, 0.8, 0.1, 1.0).unwrap();
        let z = sweep_init(&problem).unwrap();
        let err = masked_rmse(&problem.to_ray_length(&z), &truth, problem.lit());
        assert!(err < 2.0, "rmse {err}");
    }

    #[test]
    fn lambertian_beats_real_like_on_same_geometry() {
        for seed in 0..3 {
            let (lam, real, truth, cam) = tube_pair(64, seed);
            let lit = SfsProblem::new(lam.luminance(), &cam, 0.8, 0.1, 1.0)
                .unwrap()
                .lit()
                .to_vec();
            let opts = SfsOptions::default();
            let a = sfs_reconstruct(&lam, &cam, 0.8, &opts).unwrap();
            let b = sfs_reconstruct(&real, &cam, 0.8, &opts).unwrap();
            let (ea, eb) = (masked_rmse(&a.depth, &truth, &lit), masked_rmse(&b.depth, &truth, &lit));
            assert!(ea < 2.0 && ea < eb, "seed {seed}: lambertian {ea}, real-like {eb}");
        }
    }

    #[test]
    fn objective_never_increases() {
        let (lam, _, _, cam) = tube_pair(32, 0);
        let problem = SfsProblem::new(lam.luminance(), &cam, 0.8, 0.1, 1.0).unwrap();
        let mut z = vec![40.0; 32 * 32];
        let mut last = problem.objective(&z, None);
        for _ in 0..10 {
            let opts = SfsOptions {
                max_iterations: 5,
                ..SfsOptions::default()
            };
            let res = problem.solve(&mut z, &opts).unwrap();
            assert!(res.objective <= last);
            last = res.objective;
        }
    }
}
