//! Depth training objective: point-wise L1, SSIM, and the multi-scale edge
//! term, each returning its value and the gradient with respect to the
//! estimate.
//!
//! The edge operator at spacing k is the unnormalized symmetric difference
//! `|d(r, c+k) − d(r, c−k)| + |d(r+k, c) − d(r−k, c)|` with replicate
//! padding; spacings 1, 2, 3 are the 3×3, 5×5 and 7×7 filters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{DepthMap, MAX_DEPTH_MM};

const SSIM_WINDOW: usize = 7;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Borrowed row-major scalar grid.
#[derive(Clone, Copy, Debug)]
pub struct Grid<'a> {
    pub width: usize,
    pub height: usize,
    pub data: &'a [f64],
}

impl<'a> Grid<'a> {
    pub fn new(width: usize, height: usize, data: &'a [f64]) -> Self {
        assert_eq!(data.len(), width * height, "grid buffer size");
        Self { width, height, data }
    }

    #[inline]
    fn at(&self, r: isize, c: isize) -> f64 {
        let r = r.clamp(0, self.height as isize - 1) as usize;
        let c = c.clamp(0, self.width as isize - 1) as usize;
        self.data[r * self.width + c]
    }
}

impl<'a> From<&'a DepthMap> for Grid<'a> {
    fn from(d: &'a DepthMap) -> Self {
        Grid::new(d.width, d.height, &d.data)
    }
}

/// Scalar loss with its gradient with respect to the estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Weight of the L1 term.
    pub lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda: 0.1 }
    }
}

/// Per-term values of the composite objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub l1: f64,
    pub ssim: f64,
    pub edge: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeImageSet {
    pub g3: Vec<f64>,
    pub g5: Vec<f64>,
    pub g7: Vec<f64>,
}

fn same_dims(a: Grid, b: Grid) -> Result<()> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::contract(
            "losses",
            format!(
                "dimension mismatch: {}x{} vs {}x{}",
                a.width, a.height, b.width, b.height
            ),
        ));
    }
    Ok(())
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Edge magnitude image at pixel spacing `k` ∈ {1, 2, 3}.
pub fn edge_image(d: Grid, k: usize) -> Result<Vec<f64>> {
    if !(1..=3).contains(&k) {
        return Err(Error::contract(
            "losses",
            format!("edge spacing {k} not in {{1, 2, 3}}"),
        ));
    }
    let side = 2 * k + 1;
    if d.width < side || d.height < side {
        return Err(Error::contract(
            "losses",
            format!("{}x{} image smaller than the {side}x{side} filter", d.width, d.height),
        ));
    }
    let k = k as isize;
    let mut out = Vec::with_capacity(d.data.len());
    for r in 0..d.height as isize {
        for c in 0..d.width as isize {
            let gx = d.at(r, c + k) - d.at(r, c - k);
            let gy = d.at(r + k, c) - d.at(r - k, c);
            out.push(gx.abs() + gy.abs());
        }
    }
    Ok(out)
}

pub fn edge_images(d: Grid) -> Result<EdgeImageSet> {
    Ok(EdgeImageSet {
        g3: edge_image(d, 1)?,
        g5: edge_image(d, 2)?,
        g7: edge_image(d, 3)?,
    })
}

/// Mean over pixels of the largest absolute edge discrepancy across the
/// three scales. Ties route the subgradient to the smallest scale; the
/// gradient flows through the estimate's edges only.
pub fn multiscale_edge_loss(truth: Grid, est: Grid) -> Result<LossValue> {
    same_dims(truth, est)?;
    if truth.width.min(truth.height) < 7 {
        return Err(Error::contract("losses", "edge loss needs both dimensions >= 7"));
    }
    let g = edge_images(truth)?;
    let gh = edge_images(est)?;
    let (w, h) = (est.width, est.height);
    let p = (w * h) as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; w * h];
    let clamp_idx =
        |r: isize, c: isize| -> usize { r.clamp(0, h as isize - 1) as usize * w + c.clamp(0, w as isize - 1) as usize };
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let diffs = [gh.g3[i] - g.g3[i], gh.g5[i] - g.g5[i], gh.g7[i] - g.g7[i]];
            let mut best = 0;
            for s in 1..3 {
                if diffs[s].abs() > diffs[best].abs() {
                    best = s;
                }
            }
            value += diffs[best].abs();
            let coeff = sign(diffs[best]) / p;
            if coeff == 0.0 {
                continue;
            }
            let k = best as isize + 1;
            let (ri, ci) = (r as isize, c as isize);
            let gx = est.at(ri, ci + k) - est.at(ri, ci - k);
            let gy = est.at(ri + k, ci) - est.at(ri - k, ci);
            let sx = coeff * sign(gx);
            let sy = coeff * sign(gy);
            grad[clamp_idx(ri, ci + k)] += sx;
            grad[clamp_idx(ri, ci - k)] -= sx;
            grad[clamp_idx(ri + k, ci)] += sy;
            grad[clamp_idx(ri - k, ci)] -= sy;
        }
    }
    Ok(LossValue { value: value / p, grad })
}

/// Mean absolute difference. Subgradient 0 at exact equality.
pub fn l1_loss(truth: Grid, est: Grid) -> Result<LossValue> {
    same_dims(truth, est)?;
    let p = truth.data.len() as f64;
    let mut value = 0.0;
    let grad = truth
        .data
        .iter()
        .zip(est.data)
        .map(|(&t, &e)| {
            value += (e - t).abs();
            sign(e - t) / p
        })
        .collect();
    Ok(LossValue { value: value / p, grad })
}

/// SSIM over 7×7 uniform windows (valid positions only) of both maps
/// divided by `range`, with population statistics.
pub fn ssim(truth: Grid, est: Grid, range: f64) -> Result<f64> {
    Ok(ssim_with_grad(truth, est, range)?.0)
}

fn ssim_with_grad(truth: Grid, est: Grid, range: f64) -> Result<(f64, Vec<f64>)> {
    same_dims(truth, est)?;
    if truth.width < 8 || truth.height < 8 {
        return Err(Error::contract("losses", "SSIM needs both dimensions >= 8"));
    }
    let (w, h) = (truth.width, truth.height);
    let win = SSIM_WINDOW;
    let n = (win * win) as f64;
    let nwin = ((w - win + 1) * (h - win + 1)) as f64;
    let inv = 1.0 / range;
    let mut total = 0.0;
    let mut grad = vec![0.0; w * h];
    for r0 in 0..=h - win {
        for c0 in 0..=w - win {
            let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for r in r0..r0 + win {
                for c in c0..c0 + win {
                    let x = truth.data[r * w + c] * inv;
                    let y = est.data[r * w + c] * inv;
                    sx += x;
                    sy += y;
                    sxx += x * x;
                    syy += y * y;
                    sxy += x * y;
                }
            }
            let (mx, my) = (sx / n, sy / n);
            let vx = sxx / n - mx * mx;
            let vy = syy / n - my * my;
            let cxy = sxy / n - mx * my;
            let a1 = 2.0 * mx * my + SSIM_C1;
            let a2 = 2.0 * cxy + SSIM_C2;
            let b1 = mx * mx + my * my + SSIM_C1;
            let b2 = vx + vy + SSIM_C2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            // dS/dy_i = (2/N) (alpha + beta x_i + gamma y_i)
            let alpha = (mx * a2 - a1 * mx) / (b1 * b2) - s * (my / b1 - my / b2);
            let beta = a1 / (b1 * b2);
            let gamma = -s / b2;
            for r in r0..r0 + win {
                for c in c0..c0 + win {
                    let i = r * w + c;
                    let x = truth.data[i] * inv;
                    let y = est.data[i] * inv;
                    grad[i] += alpha + beta * x + gamma * y;
                }
            }
        }
    }
    let scale = 2.0 / n / nwin * inv;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((total / nwin, grad))
}

/// `clamp((1 − SSIM) / 2, 0, 1)` on depths normalized by the 100 mm range.
pub fn ssim_loss(truth: Grid, est: Grid) -> Result<LossValue> {
    ssim_loss_range(truth, est, MAX_DEPTH_MM)
}

/// [`ssim_loss`] with an explicit dynamic range.
pub fn ssim_loss_range(truth: Grid, est: Grid, range: f64) -> Result<LossValue> {
    let (s, dsdy) = ssim_with_grad(truth, est, range)?;
    let raw = (1.0 - s) / 2.0;
    let value = raw.clamp(0.0, 1.0);
    let grad = if raw == value {
        dsdy.into_iter().map(|g| -0.5 * g).collect()
    } else {
        vec![0.0; dsdy.len()]
    };
    Ok(LossValue { value, grad })
}

/// `λ·L1 + SSIM + edge` with depths in millimeters.
pub fn composite_loss(truth: Grid, est: Grid, weights: LossWeights) -> Result<(LossTerms, Vec<f64>)> {
    composite_loss_range(truth, est, weights, MAX_DEPTH_MM)
}

/// Composite loss for maps expressed in units where the full depth range is
/// `range` (1.0 for the network's normalized output).
pub fn composite_loss_range(truth: Grid, est: Grid, weights: LossWeights, range: f64) -> Result<(LossTerms, Vec<f64>)> {
    if weights.lambda < 0.0 {
        return Err(Error::contract("losses", "lambda must be non-negative"));
    }
    let l1 = l1_loss(truth, est)?;
    let ss = ssim_loss_range(truth, est, range)?;
    let edge = multiscale_edge_loss(truth, est)?;
    let grad = l1
        .grad
        .iter()
        .zip(&ss.grad)
        .zip(&edge.grad)
        .map(|((a, b), c)| weights.lambda * a + b + c)
        .collect();
    let terms = LossTerms {
        l1: l1.value,
        ssim: ss.value,
        edge: edge.value,
        total: weights.lambda * l1.value + ss.value + edge.value,
    };
    Ok((terms, grad))
}
