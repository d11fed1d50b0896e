//! Three-arm comparison: translated input with the composite loss, translated
//! input with the plain L1 loss, and the composite-loss network on raw input.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::correction::{correct_depth, fit_correction, CorrectionFit};
use super::metrics::{pearson, sample_point_depths, PointDepthSample};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::imgio::{read_color, DepthMap, Domain, Entry, Manifest, MAX_DEPTH_MM};
use crate::losses::{composite_loss_range, Grid, LossTerms};
use crate::nets::checkpoint::load_checkpoint;
use crate::nets::model::{ArchConfig, ModelKind, ModelParams};
use crate::nets::train::{
    infer_depth, load_depth_samples, load_images, train_depth, train_lst, Budget, DepthLoss, TrainConfig,
};
use crate::render::depth_map;
use crate::scenegen::{Camera, Scene};

pub const ARM_PROPOSED: &str = "lst+me";
pub const ARM_MAE: &str = "lst+mae";
pub const ARM_NO_LST: &str = "no-lst";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub translator_arch: ArchConfig,
    pub discriminator_arch: ArchConfig,
    pub depth_arch: ArchConfig,
    pub lst: TrainConfig,
    /// Depth-network recipe; the L1-only arm reuses it with the loss swapped.
    pub depth: TrainConfig,
    /// Wall points drawn per test view for the correlation.
    pub points_per_view: usize,
    /// Real-like training views used to fit each arm's depth correction.
    pub calibration_views: usize,
    pub seed: u64,
}

impl AblationConfig {
    pub fn desk(seed: u64) -> Self {
        Self {
            translator_arch: ArchConfig::desk_translator(),
            discriminator_arch: ArchConfig::desk_discriminator(),
            depth_arch: ArchConfig::desk_depth(),
            lst: TrainConfig {
                budget: Budget::Iterations(500),
                ..TrainConfig::desk_lst(seed)
            },
            depth: TrainConfig::desk_depth(seed),
            points_per_view: 4,
            calibration_views: 20,
            seed,
        }
    }

    pub fn with_resolution(mut self, res: usize) -> Self {
        self.translator_arch.resolution = res;
        self.discriminator_arch.resolution = res;
        self.depth_arch.resolution = res;
        self
    }
}

/// Pre-trained checkpoints; any missing model is trained from the dataset.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AblationModels {
    pub translator: Option<PathBuf>,
    pub depth_me: Option<PathBuf>,
    pub depth_mae: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmMetrics {
    pub name: String,
    pub translated: bool,
    pub loss: DepthLoss,
    /// Pooled over wall pixels of every test view.
    pub rmse_mm: f64,
    pub rmse_corrected_mm: f64,
    pub pearson_r: f64,
    pub correction: CorrectionFit,
    /// Mean per-view composite loss terms in normalized depth units.
    pub terms: LossTerms,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub config: AblationConfig,
    pub train_pairs: usize,
    pub test_views: usize,
    pub arms: Vec<ArmMetrics>,
}

impl AblationReport {
    pub fn arm(&self, name: &str) -> Option<&ArmMetrics> {
        self.arms.iter().find(|a| a.name == name)
    }

    /// `{"config", "train_pairs", "test_views", "arms": {name: metrics}}`.
    pub fn to_json(&self) -> Result<String> {
        let arms: serde_json::Map<String, serde_json::Value> = self
            .arms
            .iter()
            .map(|a| Ok((a.name.clone(), serde_json::to_value(a)?)))
            .collect::<Result<_>>()?;
        let doc = serde_json::json!({
            "config": self.config,
            "train_pairs": self.train_pairs,
            "test_views": self.test_views,
            "arms": arms,
        });
        Ok(serde_json::to_string_pretty(&doc)? + "\n")
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "ablation: {} training pairs, {} test views, seed {}\n",
            self.train_pairs, self.test_views, self.config.seed
        );
        let _ = writeln!(
            s,
            "{:<8} {:>9} {:>9} {:>9} {:>7} {:>8} {:>8} {:>8} {:>8}",
            "arm", "rmse", "rmse-cor", "r", "s", "t", "L1", "SSIM", "edge"
        );
        for a in &self.arms {
            let _ = writeln!(
                s,
                "{:<8} {:>9.3} {:>9.3} {:>9.4} {:>7.3} {:>8.3} {:>8.4} {:>8.4} {:>8.4}",
                a.name,
                a.rmse_mm,
                a.rmse_corrected_mm,
                a.pearson_r,
                a.correction.params.s,
                a.correction.params.t,
                a.terms.l1,
                a.terms.ssim,
                a.terms.edge
            );
        }
        s
    }
}

/// Trained or loaded models alongside the report, so callers can save them.
#[derive(Clone, Debug)]
pub struct AblationOutcome {
    pub report: AblationReport,
    pub translator: ModelParams,
    pub depth_me: ModelParams,
    pub depth_mae: ModelParams,
}

struct View {
    image: crate::imgio::ColorImage,
    scene: Scene,
    camera: Camera,
}

fn load_views<'a>(entries: impl IntoIterator<Item = &'a Entry>, root: &Path) -> Result<Vec<View>> {
    entries
        .into_iter()
        .map(|e| {
            let (Some(scene), Some(camera)) = (&e.scene, &e.camera) else {
                return Err(Error::contract(
                    "eval",
                    format!("entry {} lacks the scene and camera needed for ground truth", e.image),
                ));
            };
            Ok(View {
                image: read_color(&root.join(&e.image))?,
                scene: scene.clone(),
                camera: *camera,
            })
        })
        .collect()
}

fn load_model(path: &Path, kind: ModelKind, arch: &ArchConfig) -> Result<ModelParams> {
    let (m, _) = load_checkpoint(path)?;
    if m.kind != kind || m.arch.resolution != arch.resolution {
        return Err(Error::contract(
            "eval",
            format!(
                "checkpoint {} holds a {:?} at {}px",
                path.display(),
                m.kind,
                m.arch.resolution
            ),
        ));
    }
    Ok(m)
}

struct Arm<'a> {
    name: &'static str,
    translator: Option<&'a ModelParams>,
    net: &'a ModelParams,
    loss: DepthLoss,
}

fn evaluate_arm(
    arm: &Arm,
    calib: &[View],
    test: &[View],
    truths: &[DepthMap],
    cfg: &AblationConfig,
    exec: Exec,
) -> Result<ArmMetrics> {
    let estimate = |v: &View| infer_depth(&v.image, arm.translator, arm.net);
    let mut calib_pts = Vec::new();
    for (i, v) in calib.iter().enumerate() {
        let est = estimate(v)?;
        calib_pts.extend(sample_point_depths(
            &v.scene,
            &v.camera,
            &est,
            cfg.points_per_view,
            cfg.seed ^ (0xca1 + i as u64),
        )?);
    }
    let correction = fit_correction(&calib_pts)?;

    let per_view = exec.map(
        test.len(),
        |i| -> Result<(f64, f64, usize, LossTerms, Vec<PointDepthSample>)> {
            let v = &test[i];
            let truth = &truths[i];
            let est = estimate(v)?;
            let corrected = correct_depth(&est, correction.params).depth;
            let (mut se, mut sc, mut n) = (0.0, 0.0, 0);
            for ((t, e), c) in truth.data.iter().zip(&est.data).zip(&corrected.data) {
                if *t < MAX_DEPTH_MM {
                    se += (t - e) * (t - e);
                    sc += (t - c) * (t - c);
                    n += 1;
                }
            }
            let (w, h) = (truth.width, truth.height);
            let tn: Vec<f64> = truth.data.iter().map(|d| d / MAX_DEPTH_MM).collect();
            let en: Vec<f64> = est.data.iter().map(|d| d / MAX_DEPTH_MM).collect();
            let (terms, _) = composite_loss_range(Grid::new(w, h, &tn), Grid::new(w, h, &en), cfg.depth.weights, 1.0)?;
            let pts = sample_point_depths(
                &v.scene,
                &v.camera,
                &est,
                cfg.points_per_view,
                cfg.seed ^ (0x7e57 + i as u64),
            )?;
            Ok((se, sc, n, terms, pts))
        },
    );
    let (mut se, mut sc, mut n) = (0.0, 0.0, 0usize);
    let mut terms = LossTerms::default();
    let mut points = Vec::new();
    let k = test.len() as f64;
    for r in per_view {
        let (a, b, c, t, p) = r?;
        se += a;
        sc += b;
        n += c;
        terms.l1 += t.l1 / k;
        terms.ssim += t.ssim / k;
        terms.edge += t.edge / k;
        terms.total += t.total / k;
        points.extend(p);
    }
    if n == 0 {
        return Err(Error::contract("eval", "test views contain no wall pixels"));
    }
    Ok(ArmMetrics {
        name: arm.name.to_string(),
        translated: arm.translator.is_some(),
        loss: arm.loss,
        rmse_mm: (se / n as f64).sqrt(),
        rmse_corrected_mm: (sc / n as f64).sqrt(),
        pearson_r: pearson(&points)?,
        correction,
        terms,
        points: points.len(),
    })
}

/// Trains (or loads) every model, then scores the three arms on the real-like
/// views of `test`.
pub fn ablation_run(
    train: &Manifest,
    train_root: &Path,
    test: &Manifest,
    test_root: &Path,
    cfg: &AblationConfig,
    models: &AblationModels,
    exec: Exec,
) -> Result<AblationOutcome> {
    if cfg.points_per_view == 0 || cfg.calibration_views == 0 {
        return Err(Error::contract(
            "eval",
            "points per view and calibration views must be positive",
        ));
    }
    let translator = match &models.translator {
        Some(p) => load_model(p, ModelKind::Translator, &cfg.translator_arch)?,
        None => {
            let real = load_images(train.by_domain(Domain::RealLike), train_root)?;
            let lam = load_images(train.by_domain(Domain::Lambertian), train_root)?;
            let out = train_lst(
                &real,
                &lam,
                cfg.translator_arch.clone(),
                cfg.discriminator_arch.clone(),
                &cfg.lst,
                exec,
            )?;
            out.forward
        }
    };
    let pairs = load_depth_samples(train.by_domain(Domain::Lambertian), train_root)?;
    let depth_net = |path: &Option<PathBuf>, loss: DepthLoss| -> Result<ModelParams> {
        match path {
            Some(p) => load_model(p, ModelKind::Depth, &cfg.depth_arch),
            None => {
                let tc = TrainConfig {
                    loss,
                    ..cfg.depth.clone()
                };
                Ok(train_depth(&pairs, cfg.depth_arch.clone(), &tc, exec)?.net)
            }
        }
    };
    let depth_me = depth_net(&models.depth_me, DepthLoss::Me)?;
    let depth_mae = depth_net(&models.depth_mae, DepthLoss::Mae)?;

    let calib = load_views(
        train.by_domain(Domain::RealLike).take(cfg.calibration_views),
        train_root,
    )?;
    let views = load_views(test.by_domain(Domain::RealLike), test_root)?;
    if views.is_empty() {
        return Err(Error::contract("eval", "test manifest has no real-like views"));
    }
    let truths: Vec<DepthMap> = views.iter().map(|v| depth_map(&v.scene, &v.camera, exec)).collect();
    let arms = [
        Arm {
            name: ARM_PROPOSED,
            translator: Some(&translator),
            net: &depth_me,
            loss: DepthLoss::Me,
        },
        Arm {
            name: ARM_MAE,
            translator: Some(&translator),
            net: &depth_mae,
            loss: DepthLoss::Mae,
        },
        Arm {
            name: ARM_NO_LST,
            translator: None,
            net: &depth_me,
            loss: DepthLoss::Me,
        },
    ];
    let metrics = arms
        .iter()
        .map(|a| evaluate_arm(a, &calib, &views, &truths, cfg, exec))
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationOutcome {
        report: AblationReport {
            config: cfg.clone(),
            train_pairs: pairs.len(),
            test_views: views.len(),
            arms: metrics,
        },
        translator,
        depth_me,
        depth_mae,
    })
}
