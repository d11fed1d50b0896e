//! Three-family location classifier, trained on images alone or on images
//! with a depth channel appended.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::imgio::{read_color, Domain, Manifest, MAX_DEPTH_MM};
use crate::nets::model::{build_classifier, ArchConfig, ModelParams};
use crate::nets::optim::Adam;
use crate::nets::tape::Tape;
use crate::nets::tensor::Tensor;
use crate::nets::train::infer_depth;
use crate::render::depth_map;

pub const CLASSES: usize = 3;

/// What, if anything, is stacked as a fourth input channel.
#[derive(Clone, Copy, Debug)]
pub enum DepthSource<'a> {
    None,
    /// Exact traced depth.
    GroundTruth,
    Estimated {
        translator: Option<&'a ModelParams>,
        net: &'a ModelParams,
    },
}

impl DepthSource<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            DepthSource::None => "image",
            DepthSource::GroundTruth => "image+true-depth",
            DepthSource::Estimated {
                translator: Some(_), ..
            } => "image+lst-depth",
            DepthSource::Estimated { translator: None, .. } => "image+raw-depth",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledView {
    pub input: Tensor,
    pub label: usize,
}

/// Inputs from the manifest's labeled entries of `domain`; depth planes are
/// normalized to [0, 1].
pub fn labeled_views(
    manifest: &Manifest,
    root: &Path,
    domain: Domain,
    depth: DepthSource,
    exec: Exec,
) -> Result<Vec<LabeledView>> {
    manifest
        .by_domain(domain)
        .map(|e| {
            let label = e
                .label
                .ok_or_else(|| Error::contract("eval", format!("entry {} has no label", e.image)))?
                as usize;
            if label >= CLASSES {
                return Err(Error::contract("eval", format!("entry {} has label {label}", e.image)));
            }
            let img = read_color(&root.join(&e.image))?;
            let base = Tensor::from_image(&img);
            let d = match depth {
                DepthSource::None => return Ok(LabeledView { input: base, label }),
                DepthSource::GroundTruth => {
                    let (Some(scene), Some(cam)) = (&e.scene, &e.camera) else {
                        return Err(Error::contract(
                            "eval",
                            format!("entry {} lacks scene and camera", e.image),
                        ));
                    };
                    depth_map(scene, cam, exec)
                }
                DepthSource::Estimated { translator, net } => infer_depth(&img, translator, net)?,
            };
            let plane: Vec<f64> = d.data.iter().map(|v| v / MAX_DEPTH_MM).collect();
            Ok(LabeledView {
                input: base.with_planes(&plane)?,
                label,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    pub arch: ArchConfig,
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub repeats: usize,
    pub train_fraction: f64,
    pub seed: u64,
    /// Permute labels before splitting; a chance-level control.
    pub shuffle_labels: bool,
}

impl ClassifyConfig {
    pub fn desk(seed: u64) -> Self {
        Self {
            arch: ArchConfig::desk_classifier(),
            epochs: 12,
            batch: 8,
            learning_rate: 1e-3,
            repeats: 5,
            train_fraction: 0.8,
            seed,
            shuffle_labels: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch == 0 || self.repeats == 0 {
            return Err(Error::contract("eval", "epochs, batch and repeats must be positive"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) || !(self.learning_rate > 0.0) {
            return Err(Error::contract(
                "eval",
                "train fraction must lie in (0, 1) and the rate be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub arm: String,
    pub channels: usize,
    pub shuffled_labels: bool,
    /// Test accuracy per split, as fractions.
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation across splits.
    pub sd: f64,
}

impl ClassificationResult {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<18} {:>6.1}% ± {:>4.1}%  splits:",
            self.arm,
            100.0 * self.mean,
            100.0 * self.sd
        );
        for a in &self.accuracies {
            let _ = write!(s, " {:.1}", 100.0 * a);
        }
        s.push('\n');
        s
    }
}

fn softmax_xent(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    let p: Vec<f64> = e.iter().map(|v| v / z).collect();
    let loss = -(p[label].max(1e-300)).ln();
    let grad = p
        .iter()
        .enumerate()
        .map(|(k, &pk)| pk - if k == label { 1.0 } else { 0.0 })
        .collect();
    (loss, grad)
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) },
        )
        .0
}

fn train_classifier(
    views: &[LabeledView],
    labels: &[usize],
    train: &[usize],
    cfg: &ClassifyConfig,
    seed: u64,
    exec: Exec,
) -> Result<ModelParams> {
    let channels = views[0].input.channels;
    let mut net = build_classifier(cfg.arch.clone(), channels, CLASSES, seed)?;
    let mut opt = Adam::new(net.param_count(), cfg.learning_rate, 0.9);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc1a5);
    let mut order = train.to_vec();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch) {
            let scale = 1.0 / chunk.len() as f64;
            let grads = exec.map(chunk.len(), |k| -> Result<(f64, Vec<f64>)> {
                let i = chunk[k];
                let mut tape = Tape::new(vec![&net.values]);
                let x = tape.input(views[i].input.clone());
                let y = net.forward(&mut tape, 0, x)?;
                let (loss, g) = softmax_xent(&tape.value(y).data, labels[i]);
                let seed = Tensor::from_vec(CLASSES, 1, 1, g.iter().map(|v| v * scale).collect())?;
                Ok((loss, tape.backward(vec![(y, seed)])?.params.swap_remove(0)))
            });
            let mut total = vec![0.0; net.param_count()];
            for r in grads {
                let (loss, g) = r?;
                if !loss.is_finite() {
                    return Err(Error::Diverged {
                        module: "eval",
                        message: format!("classifier loss non-finite in epoch {epoch}"),
                    });
                }
                total.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
            opt.step(&mut net.values, &total);
        }
    }
    Ok(net)
}

/// Mean ± sd test accuracy over `repeats` seeded train/test splits.
pub fn downstream_classification(
    views: &[LabeledView],
    arm: &str,
    cfg: &ClassifyConfig,
    exec: Exec,
) -> Result<ClassificationResult> {
    cfg.validate()?;
    for class in 0..CLASSES {
        if !views.iter().any(|v| v.label == class) {
            return Err(Error::contract("eval", format!("no views of class {class}")));
        }
    }
    let channels = views[0].input.channels;
    if views.iter().any(|v| v.input.channels != channels) {
        return Err(Error::contract("eval", "views have mixed channel counts"));
    }
    let mut labels: Vec<usize> = views.iter().map(|v| v.label).collect();
    if cfg.shuffle_labels {
        labels.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5a0f));
    }
    let n_train = ((views.len() as f64) * cfg.train_fraction).round() as usize;
    if n_train == 0 || n_train == views.len() {
        return Err(Error::contract(
            "eval",
            format!("{} views cannot be split", views.len()),
        ));
    }
    let mut accuracies = Vec::with_capacity(cfg.repeats);
    for r in 0..cfg.repeats {
        let split_seed = cfg.seed.wrapping_add(r as u64);
        let mut idx: Vec<usize> = (0..views.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(split_seed));
        let (train, test) = idx.split_at(n_train);
        let net = train_classifier(views, &labels, train, cfg, split_seed, exec)?;
        let hits = exec
            .map(test.len(), |k| {
                net.run(&views[test[k]].input)
                    .map(|y| argmax(&y.data) == labels[test[k]])
            })
            .into_iter()
            .collect::<Result<Vec<bool>>>()?;
        accuracies.push(hits.iter().filter(|h| **h).count() as f64 / test.len() as f64);
    }
    let n = accuracies.len() as f64;
    let mean = accuracies.iter().sum::<f64>() / n;
    let sd = if accuracies.len() > 1 {
        (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(ClassificationResult {
        arm: arm.to_string(),
        channels,
        shuffled_labels: cfg.shuffle_labels,
        accuracies,
        mean,
        sd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_gradient_matches_finite_differences() {
        let logits = [0.3, -1.2, 2.0];
        let (_, g) = softmax_xent(&logits, 1);
        for k in 0..3 {
            let h = 1e-6;
            let mut p = logits;
            p[k] += h;
            let mut m = logits;
            m[k] -= h;
            let num = (softmax_xent(&p, 1).0 - softmax_xent(&m, 1).0) / (2.0 * h);
            assert!((g[k] - num).abs() < 1e-7, "{k}: {} vs {num}", g[k]);
        }
        assert_eq!(argmax(&logits), 2);
    }

    fn toy_views(n: usize) -> Vec<LabeledView> {
        // Class is encoded in the mean brightness, so it is learnable.
        (0..n)
            .map(|i| {
                let label = i % CLASSES;
                let v = 0.2 + 0.3 * label as f64 + 0.01 * (i % 7) as f64;
                LabeledView {
                    input: Tensor::from_vec(3, 16, 16, vec![v; 3 * 256]).unwrap(),
                    label,
                }
            })
            .collect()
    }

    fn toy_cfg() -> ClassifyConfig {
        ClassifyConfig {
            arch: ArchConfig::desk_classifier().with_resolution(16),
            epochs: 40,
            batch: 6,
            learning_rate: 3e-3,
            repeats: 2,
            train_fraction: 0.8,
            seed: 4,
            shuffle_labels: false,
        }
    }

    #[test]
    fn separable_toy_classes_are_learned() {
        let mut cfg = toy_cfg();
        cfg.arch.norm = crate::nets::NormKind::None;
        let r = downstream_classification(&toy_views(30), "toy", &cfg, Exec::Sequential).unwrap();
        assert!(r.mean > 0.9, "{r:?}");
        let again = downstream_classification(&toy_views(30), "toy", &cfg, Exec::Parallel).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn missing_class_is_an_error() {
        let views: Vec<_> = toy_views(12).into_iter().filter(|v| v.label != 2).collect();
        let err = downstream_classification(&views, "toy", &toy_cfg(), Exec::Sequential).unwrap_err();
        assert!(err.to_string().contains("class 2"), "{err}");
    }
}
