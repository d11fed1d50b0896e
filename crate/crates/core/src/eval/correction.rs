//! Affine depth correction `d̃ = s·d̂ + t` and its least-squares fit.

use serde::{Deserialize, Serialize};

use super::metrics::PointDepthSample;
use crate::error::{Error, Result};
use crate::imgio::{DepthMap, MAX_DEPTH_MM};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionParams {
    pub s: f64,
    /// Offset in millimeters.
    pub t: f64,
}

impl Default for CorrectionParams {
    /// The published clinical values.
    fn default() -> Self {
        Self { s: 0.73, t: -3.0 }
    }
}

impl CorrectionParams {
    pub const IDENTITY: Self = Self { s: 1.0, t: 0.0 };

    #[inline]
    pub fn apply(&self, d: f64) -> f64 {
        self.s * d + self.t
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrectedDepth {
    pub depth: DepthMap,
    /// Pixels pushed back into [0, 100] mm.
    pub clamped: usize,
}

pub fn correct_depth(d: &DepthMap, params: CorrectionParams) -> CorrectedDepth {
    let mut clamped = 0;
    let data = d
        .data
        .iter()
        .map(|&v| {
            let c = params.apply(v);
            let k = c.clamp(0.0, MAX_DEPTH_MM);
            if k != c {
                clamped += 1;
            }
            k
        })
        .collect();
    CorrectedDepth {
        depth: DepthMap::from_vec_clamped(d.width, d.height, data),
        clamped,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionFit {
    pub params: CorrectionParams,
    /// RMS of `s·est + t − true` over the fitting samples (mm).
    pub residual_rms: f64,
}

/// Least-squares `(s, t)` mapping estimated to true depth.
pub fn fit_correction(samples: &[PointDepthSample]) -> Result<CorrectionFit> {
    if samples.len() < 2 {
        return Err(Error::contract(
            "eval",
            format!("fit needs at least 2 samples, got {}", samples.len()),
        ));
    }
    let n = samples.len() as f64;
    let mx = samples.iter().map(|p| p.estimate).sum::<f64>() / n;
    let my = samples.iter().map(|p| p.truth).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for p in samples {
        let dx = p.estimate - mx;
        sxx += dx * dx;
        sxy += dx * (p.truth - my);
    }
    if sxx <= f64::EPSILON * n * mx.abs().max(1.0).powi(2) {
        return Err(Error::contract(
            "eval",
            "fit is degenerate: all estimated depths are equal",
        ));
    }
    let s = sxy / sxx;
    let params = CorrectionParams { s, t: my - s * mx };
    let residual_rms = (samples
        .iter()
        .map(|p| (params.apply(p.estimate) - p.truth).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(CorrectionFit { params, residual_rms })
}
