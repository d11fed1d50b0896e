use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{build_depth_net, build_discriminator, build_translator, ArchConfig, ModelKind, ModelParams};
use super::optim::Adam;
use super::tape::Tape;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::imgio::{read_color, read_depth, ColorImage, DepthMap, Entry, MAX_DEPTH_MM};
use crate::losses::{composite_loss_range, l1_loss, Grid, LossTerms, LossWeights};

/// Loss used to train the depth network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthLoss {
    /// `λ·L1 + SSIM + multi-scale edge`.
    Me,
    /// Mean absolute error only.
    Mae,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Budget {
    Iterations(usize),
    Epochs(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdversarialLoss {
    LeastSquares,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub budget: Budget,
    pub batch: usize,
    pub learning_rate: f64,
    /// Adam first-moment decay.
    pub beta1: f64,
    pub cycle_weight: f64,
    /// Weight of `‖F(v) − v‖₁ + ‖F_back(r) − r‖₁`, which keeps each
    /// translator near identity on its own target domain.
    #[serde(default)]
    pub identity_weight: f64,
    pub adversarial: AdversarialLoss,
    pub loss: DepthLoss,
    pub weights: LossWeights,
    pub seed: u64,
    /// Stop as soon as a step's training loss falls below this.
    #[serde(default)]
    pub stop_below: Option<f64>,
}

impl TrainConfig {
    /// Translator recipe at paper scale: 400 iterations of 38 images.
    pub fn paper_lst(seed: u64) -> Self {
        Self {
            budget: Budget::Iterations(400),
            batch: 38,
            learning_rate: 2e-4,
            beta1: 0.5,
            cycle_weight: 10.0,
            identity_weight: 5.0,
            adversarial: AdversarialLoss::LeastSquares,
            loss: DepthLoss::Me,
            weights: LossWeights::default(),
            seed,
            stop_below: None,
        }
    }

    /// Depth-network recipe at paper scale: 7 epochs of 10-image batches.
    pub fn paper_depth(seed: u64) -> Self {
        Self {
            budget: Budget::Epochs(7),
            batch: 10,
            learning_rate: 1e-4,
            beta1: 0.9,
            ..Self::paper_lst(seed)
        }
    }

    pub fn desk_lst(seed: u64) -> Self {
        Self {
            budget: Budget::Iterations(200),
            batch: 4,
            ..Self::paper_lst(seed)
        }
    }

    pub fn desk_depth(seed: u64) -> Self {
        Self {
            budget: Budget::Epochs(40),
            batch: 8,
            ..Self::paper_depth(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let count = match self.budget {
            Budget::Iterations(n) | Budget::Epochs(n) => n,
        };
        if count == 0 || self.batch == 0 {
            return Err(Error::contract("nets", "budget and batch size must be positive"));
        }
        if !(self.learning_rate > 0.0)
            || !(0.0..1.0).contains(&self.beta1)
            || self.cycle_weight < 0.0
            || self.identity_weight < 0.0
        {
            return Err(Error::contract(
                "nets",
                format!("invalid optimizer settings in {self:?}"),
            ));
        }
        Ok(())
    }

    fn steps(&self, dataset: usize) -> usize {
        match self.budget {
            Budget::Iterations(n) => n,
            Budget::Epochs(e) => e * dataset.div_ceil(self.batch),
        }
    }
}

/// An image with its depth target normalized to [0, 1].
#[derive(Clone, Debug)]
pub struct DepthSample {
    pub image: Tensor,
    pub target: Vec<f64>,
}

impl DepthSample {
    pub fn new(image: &ColorImage, depth: &DepthMap) -> Result<Self> {
        if (image.width, image.height) != (depth.width, depth.height) {
            return Err(Error::contract("nets", "image and depth sizes differ"));
        }
        Ok(Self {
            image: Tensor::from_image(image),
            target: depth.data.iter().map(|d| d / MAX_DEPTH_MM).collect(),
        })
    }
}

/// Loads paired entries; any entry without a depth path is a contract error.
pub fn load_depth_samples<'a>(entries: impl IntoIterator<Item = &'a Entry>, root: &Path) -> Result<Vec<DepthSample>> {
    entries
        .into_iter()
        .map(|e| {
            let depth = e
                .depth
                .as_ref()
                .ok_or_else(|| Error::contract("nets", format!("entry {} has no paired depth", e.image)))?;
            DepthSample::new(&read_color(&root.join(&e.image))?, &read_depth(&root.join(depth))?)
        })
        .collect()
}

pub fn load_images<'a>(entries: impl IntoIterator<Item = &'a Entry>, root: &Path) -> Result<Vec<Tensor>> {
    entries
        .into_iter()
        .map(|e| Ok(Tensor::from_image(&read_color(&root.join(&e.image))?)))
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DepthLogRecord {
    pub step: usize,
    pub loss: f64,
    pub terms: LossTerms,
}

#[derive(Clone, Debug)]
pub struct DepthTraining {
    pub net: ModelParams,
    pub log: Vec<DepthLogRecord>,
}

/// Loss and its gradient for one predicted normalized depth map.
fn depth_loss(pred: &Tensor, target: &[f64], cfg: &TrainConfig) -> Result<(LossTerms, Vec<f64>)> {
    let (w, h) = (pred.width, pred.height);
    let (truth, est) = (Grid::new(w, h, target), Grid::new(w, h, &pred.data));
    match cfg.loss {
        DepthLoss::Me => composite_loss_range(truth, est, cfg.weights, 1.0),
        DepthLoss::Mae => {
            let l = l1_loss(truth, est)?;
            let terms = LossTerms {
                l1: l.value,
                total: l.value,
                ..LossTerms::default()
            };
            Ok((terms, l.grad))
        }
    }
}

fn mean_terms(terms: &[LossTerms]) -> LossTerms {
    let n = terms.len() as f64;
    let mut m = LossTerms::default();
    for t in terms {
        m.l1 += t.l1 / n;
        m.ssim += t.ssim / n;
        m.edge += t.edge / n;
        m.total += t.total / n;
    }
    m
}

/// Sums per-sample gradients in index order.
fn sum_grads(parts: impl IntoIterator<Item = Vec<f64>>, n: usize) -> Vec<f64> {
    let mut acc = vec![0.0; n];
    for g in parts {
        for (a, b) in acc.iter_mut().zip(&g) {
            *a += b;
        }
    }
    acc
}

/// Trains a depth network from scratch on paired samples.
pub fn train_depth(samples: &[DepthSample], arch: ArchConfig, cfg: &TrainConfig, exec: Exec) -> Result<DepthTraining> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::contract("nets", "no training samples"));
    }
    let mut net = build_depth_net(arch, cfg.seed)?;
    for s in samples {
        net.check_input(&s.image)?;
    }
    let mut opt = Adam::new(net.param_count(), cfg.learning_rate, cfg.beta1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0001);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut cursor = order.len();
    let mut log = Vec::new();
    let batch = cfg.batch.min(samples.len());

    for step in 0..cfg.steps(samples.len()) {
        let mut picked = Vec::with_capacity(batch);
        while picked.len() < batch {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            picked.push(order[cursor]);
            cursor += 1;
        }
        let scale = 1.0 / batch as f64;
        let results = exec.map(batch, |k| -> Result<(LossTerms, Vec<f64>)> {
            let s = &samples[picked[k]];
            let mut tape = Tape::new(vec![&net.values]);
            let x = tape.input(s.image.clone());
            let y = net.forward(&mut tape, 0, x)?;
            let pred = tape.value(y);
            let (terms, mut g) = depth_loss(pred, &s.target, cfg)?;
            g.iter_mut().for_each(|v| *v *= scale);
            let seed = Tensor::from_vec(1, pred.height, pred.width, g)?;
            let mut grads = tape.backward(vec![(y, seed)])?;
            Ok((terms, grads.params.swap_remove(0)))
        });
        let mut terms = Vec::with_capacity(batch);
        let mut grads = Vec::with_capacity(batch);
        for r in results {
            let (t, g) = r?;
            terms.push(t);
            grads.push(g);
        }
        let grad = sum_grads(grads, net.param_count());
        let mean = mean_terms(&terms);
        if !mean.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                module: "nets",
                message: format!("depth training loss non-finite at step {step}"),
            });
        }
        log.push(DepthLogRecord {
            step,
            loss: mean.total,
            terms: mean,
        });
        if cfg.stop_below.is_some_and(|t| mean.total < t) {
            break;
        }
        opt.step(&mut net.values, &grad);
    }
    net.quantize();
    Ok(DepthTraining { net, log })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LstLogRecord {
    pub step: usize,
    /// Generator least-squares adversarial loss, both directions summed.
    pub adversarial: f64,
    /// Discriminator loss, both discriminators summed.
    pub discriminator: f64,
    /// Cycle-consistency L1, both directions summed (unweighted).
    pub cycle: f64,
    /// Identity L1, both directions summed (unweighted); 0 when disabled.
    pub identity: f64,
}

#[derive(Clone, Debug)]
pub struct LstModels {
    /// Real-like → Lambertian, the translator applied before depth estimation.
    pub forward: ModelParams,
    /// Lambertian → real-like.
    pub backward: ModelParams,
    /// Judges Lambertian images.
    pub disc_lambertian: ModelParams,
    /// Judges real-like images.
    pub disc_real: ModelParams,
    pub log: Vec<LstLogRecord>,
}

fn mean_sq_offset(t: &Tensor, target: f64) -> (f64, Tensor) {
    let n = t.data.len() as f64;
    let loss = t.data.iter().map(|v| (v - target) * (v - target)).sum::<f64>() / n;
    let grad = Tensor {
        data: t.data.iter().map(|v| 2.0 * (v - target) / n).collect(),
        ..t.clone()
    };
    (loss, grad)
}

fn mean_abs_diff(a: &Tensor, b: &Tensor) -> (f64, Tensor) {
    let n = a.data.len() as f64;
    let loss = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum::<f64>() / n;
    let grad = Tensor {
        data: a
            .data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| {
                let d = x - y;
                if d > 0.0 {
                    1.0 / n
                } else if d < 0.0 {
                    -1.0 / n
                } else {
                    0.0
                }
            })
            .collect(),
        ..a.clone()
    };
    (loss, grad)
}

fn scaled(mut t: Tensor, s: f64) -> Tensor {
    t.data.iter_mut().for_each(|v| *v *= s);
    t
}

struct GenStep {
    adversarial: f64,
    cycle: f64,
    identity: f64,
    fake_lambertian: Tensor,
    fake_real: Tensor,
    grad_forward: Vec<f64>,
    grad_backward: Vec<f64>,
}

/// Unpaired cycle-consistent adversarial training of the translator pair.
pub fn train_lst(
    real: &[Tensor],
    lambertian: &[Tensor],
    gen_arch: ArchConfig,
    disc_arch: ArchConfig,
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<LstModels> {
    cfg.validate()?;
    if real.is_empty() || lambertian.is_empty() {
        return Err(Error::contract(
            "nets",
            format!(
                "both domains need images (real-like {}, lambertian {})",
                real.len(),
                lambertian.len()
            ),
        ));
    }
    let mut f = build_translator(gen_arch.clone(), cfg.seed)?;
    let mut b = build_translator(gen_arch, cfg.seed.wrapping_add(1))?;
    let mut dv = build_discriminator(disc_arch.clone(), cfg.seed.wrapping_add(2))?;
    let mut dr = build_discriminator(disc_arch, cfg.seed.wrapping_add(3))?;
    for t in real.iter().chain(lambertian) {
        f.check_input(t)?;
        dv.check_input(t)?;
    }
    let (lr, b1) = (cfg.learning_rate, cfg.beta1);
    let mut opt_f = Adam::new(f.param_count(), lr, b1);
    let mut opt_b = Adam::new(b.param_count(), lr, b1);
    let mut opt_dv = Adam::new(dv.param_count(), lr, b1);
    let mut opt_dr = Adam::new(dr.param_count(), lr, b1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0002);
    let mut log = Vec::new();
    let batch = cfg.batch;
    let scale = 1.0 / batch as f64;
    let lambda = cfg.cycle_weight;

    for step in 0..cfg.steps(real.len().max(lambertian.len())) {
        let ri: Vec<usize> = (0..batch).map(|_| rng.random_range(0..real.len())).collect();
        let vi: Vec<usize> = (0..batch).map(|_| rng.random_range(0..lambertian.len())).collect();

        let gen = exec.map(batch, |k| -> Result<GenStep> {
            let mut tape = Tape::new(vec![&f.values, &b.values, &dv.values, &dr.values]);
            let r = tape.input(real[ri[k]].clone());
            let fv = f.forward(&mut tape, 0, r)?;
            let rr = b.forward(&mut tape, 1, fv)?;
            let v = tape.input(lambertian[vi[k]].clone());
            let fr = b.forward(&mut tape, 1, v)?;
            let vv = f.forward(&mut tape, 0, fr)?;
            let sv = dv.forward(&mut tape, 2, fv)?;
            let sr = dr.forward(&mut tape, 3, fr)?;
            let (adv_v, g_sv) = mean_sq_offset(tape.value(sv), 1.0);
            let (adv_r, g_sr) = mean_sq_offset(tape.value(sr), 1.0);
            let (cyc_r, g_rr) = mean_abs_diff(tape.value(rr), &real[ri[k]]);
            let (cyc_v, g_vv) = mean_abs_diff(tape.value(vv), &lambertian[vi[k]]);
            let mut seeds = vec![
                (sv, scaled(g_sv, scale)),
                (sr, scaled(g_sr, scale)),
                (rr, scaled(g_rr, lambda * scale)),
                (vv, scaled(g_vv, lambda * scale)),
            ];
            let mut identity = 0.0;
            if cfg.identity_weight > 0.0 {
                let iv = f.forward(&mut tape, 0, v)?;
                let ir = b.forward(&mut tape, 1, r)?;
                let (id_v, g_iv) = mean_abs_diff(tape.value(iv), &lambertian[vi[k]]);
                let (id_r, g_ir) = mean_abs_diff(tape.value(ir), &real[ri[k]]);
                identity = id_v + id_r;
                seeds.push((iv, scaled(g_iv, cfg.identity_weight * scale)));
                seeds.push((ir, scaled(g_ir, cfg.identity_weight * scale)));
            }
            let mut grads = tape.backward(seeds)?;
            let grad_backward = grads.params.swap_remove(1);
            let grad_forward = grads.params.swap_remove(0);
            Ok(GenStep {
                adversarial: adv_v + adv_r,
                cycle: cyc_r + cyc_v,
                identity,
                fake_lambertian: tape.value(fv).clone(),
                fake_real: tape.value(fr).clone(),
                grad_forward,
                grad_backward,
            })
        });
        let gen: Vec<GenStep> = gen.into_iter().collect::<Result<_>>()?;

        let disc = exec.map(batch, |k| -> Result<(f64, Vec<f64>, Vec<f64>)> {
            let mut tape = Tape::new(vec![&dv.values, &dr.values]);
            let v = tape.input(lambertian[vi[k]].clone());
            let fake_v = tape.input(gen[k].fake_lambertian.clone());
            let r = tape.input(real[ri[k]].clone());
            let fake_r = tape.input(gen[k].fake_real.clone());
            let sv_real = dv.forward(&mut tape, 0, v)?;
            let sv_fake = dv.forward(&mut tape, 0, fake_v)?;
            let sr_real = dr.forward(&mut tape, 1, r)?;
            let sr_fake = dr.forward(&mut tape, 1, fake_r)?;
            let (a, ga) = mean_sq_offset(tape.value(sv_real), 1.0);
            let (bb, gb) = mean_sq_offset(tape.value(sv_fake), 0.0);
            let (c, gc) = mean_sq_offset(tape.value(sr_real), 1.0);
            let (d, gd) = mean_sq_offset(tape.value(sr_fake), 0.0);
            let h = 0.5 * scale;
            let mut grads = tape.backward(vec![
                (sv_real, scaled(ga, h)),
                (sv_fake, scaled(gb, h)),
                (sr_real, scaled(gc, h)),
                (sr_fake, scaled(gd, h)),
            ])?;
            let g_dr = grads.params.swap_remove(1);
            let g_dv = grads.params.swap_remove(0);
            Ok((0.5 * (a + bb + c + d), g_dv, g_dr))
        });
        let disc: Vec<(f64, Vec<f64>, Vec<f64>)> = disc.into_iter().collect::<Result<_>>()?;

        let rec = LstLogRecord {
            step,
            adversarial: gen.iter().map(|g| g.adversarial).sum::<f64>() * scale,
            discriminator: disc.iter().map(|d| d.0).sum::<f64>() * scale,
            cycle: gen.iter().map(|g| g.cycle).sum::<f64>() * scale,
            identity: gen.iter().map(|g| g.identity).sum::<f64>() * scale,
        };
        log.push(rec);
        if ![rec.adversarial, rec.discriminator, rec.cycle, rec.identity]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::Diverged {
                module: "nets",
                message: format!("translator losses non-finite at step {step}: {rec:?}"),
            });
        }
        let g_f = sum_grads(gen.iter().map(|g| g.grad_forward.clone()), f.param_count());
        let g_b = sum_grads(gen.iter().map(|g| g.grad_backward.clone()), b.param_count());
        let g_dv = sum_grads(disc.iter().map(|d| d.1.clone()), dv.param_count());
        let g_dr = sum_grads(disc.iter().map(|d| d.2.clone()), dr.param_count());
        opt_f.step(&mut f.values, &g_f);
        opt_b.step(&mut b.values, &g_b);
        opt_dv.step(&mut dv.values, &g_dv);
        opt_dr.step(&mut dr.values, &g_dr);
    }
    for m in [&mut f, &mut b, &mut dv, &mut dr] {
        m.quantize();
    }
    Ok(LstModels {
        forward: f,
        backward: b,
        disc_lambertian: dv,
        disc_real: dr,
        log,
    })
}

/// Applies a translator to an image.
pub fn translate(image: &ColorImage, translator: &ModelParams) -> Result<ColorImage> {
    if translator.kind != ModelKind::Translator {
        return Err(Error::contract("nets", "model is not a translator"));
    }
    translator.run(&Tensor::from_image(image))?.to_image()
}

/// Estimated depth in millimeters, translating first when a translator is
/// given.
pub fn infer_depth(image: &ColorImage, translator: Option<&ModelParams>, net: &ModelParams) -> Result<DepthMap> {
    if net.kind != ModelKind::Depth {
        return Err(Error::contract("nets", "model is not a depth network"));
    }
    let input = match translator {
        Some(t) => translate(image, t)?,
        None => image.clone(),
    };
    let out = net.run(&Tensor::from_image(&input))?;
    DepthMap::from_vec(
        out.width,
        out.height,
        out.data.iter().map(|v| v * MAX_DEPTH_MM).collect(),
    )
}
