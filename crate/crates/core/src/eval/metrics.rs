//! Point-depth sampling, correlation, and the binned depth table.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::imgio::DepthMap;
use crate::render::trace;
use crate::scenegen::{Camera, Scene};

/// One pixel's true and estimated depth (mm).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointDepthSample {
    pub row: usize,
    pub col: usize,
    pub truth: f64,
    pub estimate: f64,
}

/// Draws `n` distinct wall pixels and pairs the traced depth with the
/// estimate. Pixels whose ray misses the wall are never chosen.
pub fn sample_point_depths(
    scene: &Scene,
    camera: &Camera,
    estimated: &DepthMap,
    n: usize,
    seed: u64,
) -> Result<Vec<PointDepthSample>> {
    let res = camera.resolution;
    if n == 0 {
        return Err(Error::contract("eval", "need at least one point sample"));
    }
    if (estimated.width, estimated.height) != (res, res) {
        return Err(Error::contract(
            "eval",
            format!("{}x{} estimate for a {res}px camera", estimated.width, estimated.height),
        ));
    }
    let hits: Vec<(usize, usize, f64)> = Exec::Sequential
        .map(res * res, |i| {
            trace(scene, camera, i / res, i % res).map(|s| (i / res, i % res, s.depth))
        })
        .into_iter()
        .flatten()
        .collect();
    if hits.len() < n {
        return Err(Error::contract(
            "eval",
            format!("only {} wall pixels in view, {n} samples requested", hits.len()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, hits.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked
        .into_iter()
        .map(|k| {
            let (row, col, truth) = hits[k];
            PointDepthSample {
                row,
                col,
                truth,
                estimate: estimated.at(row, col),
            }
        })
        .collect())
}

/// Pearson correlation of two equal-length series.
pub fn pearson_xy(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::contract(
            "eval",
            format!("correlation needs at least 3 pairs, got {} and {}", x.len(), y.len()),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::contract(
            "eval",
            "correlation undefined: a series has zero variance",
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Correlation between true and estimated depth.
pub fn pearson(samples: &[PointDepthSample]) -> Result<f64> {
    let t: Vec<f64> = samples.iter().map(|p| p.truth).collect();
    let e: Vec<f64> = samples.iter().map(|p| p.estimate).collect();
    pearson_xy(&t, &e)
}

/// Root-mean-square difference over the pixels where `mask` is set.
pub fn masked_rmse(a: &DepthMap, b: &DepthMap, mask: &[bool]) -> Result<f64> {
    if a.data.len() != b.data.len() || a.data.len() != mask.len() {
        return Err(Error::contract("eval", "rmse inputs differ in size"));
    }
    let (mut s, mut k) = (0.0, 0usize);
    for ((x, y), &m) in a.data.iter().zip(&b.data).zip(mask) {
        if m {
            s += (x - y) * (x - y);
            k += 1;
        }
    }
    if k == 0 {
        return Err(Error::contract("eval", "rmse mask selects no pixels"));
    }
    Ok((s / k as f64).sqrt())
}

/// Half-open true-depth interval `[lo, hi)` with a display label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthBin {
    pub label: String,
    pub lo: f64,
    pub hi: f64,
}

impl DepthBin {
    pub fn new(label: &str, lo: f64, hi: f64) -> Self {
        Self {
            label: label.to_string(),
            lo,
            hi,
        }
    }
}

/// The clinical table's rows: true depths 4 and 6, 8 and 10, 12 and 14,
/// 16 and 18, and 20 mm.
pub fn clinical_bins() -> Vec<DepthBin> {
    vec![
        DepthBin::new("4 and 6", 3.0, 7.0),
        DepthBin::new("8 and 10", 7.0, 11.0),
        DepthBin::new("12 and 14", 11.0, 15.0),
        DepthBin::new("16 and 18", 15.0, 19.0),
        DepthBin::new("20", 19.0, 21.0),
    ]
}

/// `count` equal-width bins covering `[lo, hi)`.
pub fn uniform_bins(lo: f64, hi: f64, count: usize) -> Vec<DepthBin> {
    let w = (hi - lo) / count as f64;
    (0..count)
        .map(|i| {
            let (a, b) = (
                lo + w * i as f64,
                if i + 1 == count { hi } else { lo + w * (i + 1) as f64 },
            );
            DepthBin::new(&format!("{a:.0}-{b:.0}"), a, b)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinnedRow {
    pub label: String,
    /// Mean estimated depth of the bin's samples; `None` when empty.
    pub mean_estimate: Option<f64>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinnedTable {
    pub rows: Vec<BinnedRow>,
}

impl BinnedTable {
    pub fn total(&self) -> usize {
        self.rows.iter().map(|r| r.count).sum()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{:<12} {:>14} {:>6}\n", "true depth", "mean est (mm)", "n");
        for r in &self.rows {
            let m = r.mean_estimate.map_or("-".to_string(), |m| format!("{m:.2}"));
            let _ = writeln!(s, "{:<12} {:>14} {:>6}", r.label, m, r.count);
        }
        s
    }
}

/// Groups samples by true depth and averages their estimates.
pub fn binned_table(samples: &[PointDepthSample], bins: &[DepthBin]) -> Result<BinnedTable> {
    let mut sums = vec![(0.0, 0usize); bins.len()];
    let mut outside = Vec::new();
    for p in samples {
        match bins.iter().position(|b| p.truth >= b.lo && p.truth < b.hi) {
            Some(i) => {
                sums[i].0 += p.estimate;
                sums[i].1 += 1;
            }
            None => outside.push(format!("({}, {}) true {:.3}", p.row, p.col, p.truth)),
        }
    }
    if !outside.is_empty() {
        return Err(Error::contract(
            "eval",
            format!("samples outside every bin: {}", outside.join(", ")),
        ));
    }
    let rows = bins
        .iter()
        .zip(sums)
        .map(|(b, (s, n))| BinnedRow {
            label: b.label.clone(),
            mean_estimate: (n > 0).then(|| s / n as f64),
            count: n,
        })
        .collect();
    Ok(BinnedTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::correction::CorrectionParams;
    use crate::render::depth_map;
    use crate::scenegen::make_scene;
    use crate::scenegen::sample_poses;
    use proptest::prelude::*;
    use rand::Rng;

    fn pt(truth: f64, estimate: f64) -> PointDepthSample {
        PointDepthSample {
            row: 0,
            col: 0,
            truth,
            estimate,
        }
    }

    #[test]
    fn perfect_and_inverted_correlation() {
        let up: Vec<_> = (0..10).map(|i| pt(i as f64, 3.0 * i as f64 + 2.0)).collect();
        assert!((pearson(&up).unwrap() - 1.0).abs() < 1e-15);
        let down: Vec<_> = (0..10).map(|i| pt(i as f64, -0.5 * i as f64 + 40.0)).collect();
        assert!((pearson(&down).unwrap() + 1.0).abs() < 1e-15);
        assert!(pearson(&[pt(1.0, 2.0), pt(2.0, 2.0), pt(3.0, 2.0)]).is_err());
        assert!(pearson(&up[..2]).is_err());
    }

    #[test]
    fn pearson_matches_the_textbook_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..100).map(|_| rng.random_range(0.0..100.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.3 * v + rng.random_range(-20.0..20.0)).collect();
        // Raw-moment form, independent of the centered sums used above.
        let n = 100.0;
        let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
        let sxx = x.iter().map(|v| v * v).sum::<f64>();
        let syy = y.iter().map(|v| v * v).sum::<f64>();
        let sxy = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
        let r = (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
        assert!((pearson_xy(&x, &y).unwrap() - r).abs() < 1e-12);
    }

    #[test]
    fn binned_table_groups_by_true_depth() {
        let bins = clinical_bins();
        let one: Vec<_> = [4.0, 8.0, 12.5, 16.0, 20.0].iter().map(|&t| pt(t, t + 1.5)).collect();
        let table = binned_table(&one, &bins).unwrap();
        for (r, p) in table.rows.iter().zip(&one) {
            assert_eq!((r.mean_estimate, r.count), (Some(p.estimate), 1));
        }
        let err = binned_table(&[pt(50.0, 1.0)], &bins).unwrap_err().to_string();
        assert!(err.contains("true 50.000"), "{err}");
        assert!(table.to_text().contains("4 and 6"));
    }

    #[test]
    fn binned_table_matches_a_group_by() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let bins = uniform_bins(0.0, 100.0, 7);
        let samples: Vec<_> = (0..300)
            .map(|_| pt(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)))
            .collect();
        let table = binned_table(&samples, &bins).unwrap();
        assert_eq!(table.total(), 300);
        for (b, row) in bins.iter().zip(&table.rows) {
            let members: Vec<f64> = samples
                .iter()
                .filter(|p| p.truth >= b.lo && p.truth < b.hi)
                .map(|p| p.estimate)
                .collect();
            assert_eq!(row.count, members.len());
            let mean = members.iter().sum::<f64>() / members.len() as f64;
            assert!((row.mean_estimate.unwrap() - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn point_samples_on_ground_truth_have_no_residual() {
        let scene = make_scene(0, 3).unwrap();
        let cam = sample_poses(&scene, 1, 3, 90.0, 32).unwrap()[0];
        let truth = depth_map(&scene, &cam, Exec::Sequential);
        let a = sample_point_depths(&scene, &cam, &truth, 60, 9).unwrap();
        let b = sample_point_depths(&scene, &cam, &truth, 60, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 60);
        assert!(a.iter().all(|p| p.truth == p.estimate && p.truth < 100.0));
        assert!(sample_point_depths(&scene, &cam, &truth, 0, 9).is_err());
        assert!(sample_point_depths(&scene, &cam, &truth, 10_000, 9).is_err());
    }

    proptest! {
        #[test]
        fn correlation_survives_positive_affine_maps(
            pairs in proptest::collection::vec((0.0..100.0f64, 0.0..100.0f64), 3..50),
            s in 0.05..5.0f64,
            t in -20.0..20.0f64,
        ) {
            let raw: Vec<_> = pairs.iter().map(|&(a, b)| pt(a, b)).collect();
            if let Ok(r) = pearson(&raw) {
                let p = CorrectionParams { s, t };
                let corrected: Vec<_> = raw.iter().map(|q| pt(q.truth, p.apply(q.estimate))).collect();
                prop_assert!((pearson(&corrected).unwrap() - r).abs() < 1e-12);
            }
        }
    }
}
