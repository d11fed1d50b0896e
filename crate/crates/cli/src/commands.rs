use std::path::{Path, PathBuf};

use endodepth::error::{Error, Result};
use endodepth::eval::{
    ablation_run, binned_table, correct_depth, downstream_classification, fit_correction, labeled_views, pearson,
    sample_point_depths, uniform_bins, AblationConfig, AblationModels, ClassifyConfig, CorrectionFit, CorrectionParams,
    DepthSource, PointDepthSample,
};
use endodepth::exec::Exec;
use endodepth::imgio::{
    read_color, read_manifest, write_color, write_depth, ColorImage, DepthMap, Domain, Entry, Manifest, MAX_DEPTH_MM,
};
use endodepth::nets::train::{infer_depth, train_depth, train_lst, Budget, DepthLoss, TrainConfig};
use endodepth::nets::{
    load_checkpoint, load_depth_samples, load_images, save_checkpoint, ArchConfig, ModelKind, ModelParams,
};
use endodepth::render::{depth_map, render_dataset, render_lambertian, render_pair, DatasetSpec};
use endodepth::scenegen::{make_scene, sample_poses};
use endodepth::sfs::{sfs_reconstruct, SfsOptions};
use serde::Serialize;
use serde_json::{json, Value};

use crate::runlog::{self, RunLog};
use crate::*;

/// Files written by a command, relative to `--out`.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&mut self, rel: &str) -> PathBuf {
        self.files.push(rel.to_string());
        self.dir.join(rel)
    }

    fn text(&mut self, rel: &str, body: &str) -> Result<()> {
        let p = self.path(rel);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        self.text(rel, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    fn checkpoint(&mut self, rel: &str, m: &ModelParams, step: u64, notes: Value) -> Result<()> {
        let p = self.path(rel);
        save_checkpoint(&p, m, step, notes)
    }
}

fn exec_of(c: &Common) -> Exec {
    if c.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    }
}

fn exec_name(c: &Common) -> &'static str {
    if c.sequential {
        "sequential"
    } else {
        "parallel"
    }
}

fn manifest_at(path: &Path) -> Result<(Manifest, PathBuf)> {
    let m = read_manifest(path)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((m, root))
}

fn model(path: &Path, kind: ModelKind) -> Result<ModelParams> {
    let (m, _) = load_checkpoint(path)?;
    if m.kind != kind {
        return Err(Error::contract(
            "cli",
            format!("{} holds a {:?} model, expected {:?}", path.display(), m.kind, kind),
        ));
    }
    Ok(m)
}

fn translator_of(c: &TranslatorChoice) -> Result<Option<ModelParams>> {
    c.translator
        .as_deref()
        .map(|p| model(p, ModelKind::Translator))
        .transpose()
}

fn image_resolution(images: &[endodepth::nets::Tensor]) -> Result<usize> {
    let first = images
        .first()
        .ok_or_else(|| Error::contract("cli", "manifest domain has no images"))?;
    if first.width != first.height {
        return Err(Error::contract(
            "cli",
            format!("{}x{} images are not square", first.width, first.height),
        ));
    }
    Ok(first.width)
}

fn stem(entry: &Entry) -> String {
    Path::new(&entry.image)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| entry.image.clone())
}

fn read_correction(path: Option<&Path>) -> Result<CorrectionParams> {
    match path {
        None => Ok(CorrectionParams::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let fit: CorrectionFit = serde_json::from_str(&text)?;
            Ok(fit.params)
        }
    }
}

/// Runs one subcommand, always leaving a run log under `--out`.
pub fn run(cmd: Command) -> Result<()> {
    let (name, common, seed, config): (&'static str, Common, Option<u64>, Value) = match &cmd {
        Command::Gen(a) => ("gen", a.common.clone(), Some(a.seed), serde_json::to_value(a)?),
        Command::Render(a) => ("render", a.common.clone(), Some(a.seed), serde_json::to_value(a)?),
        Command::Sfs(a) => ("sfs", a.common.clone(), None, serde_json::to_value(a)?),
        Command::TrainLst(a) => ("train-lst", a.common.clone(), Some(a.seed), serde_json::to_value(a)?),
        Command::TrainDepth(a) => ("train-depth", a.common.clone(), Some(a.seed), serde_json::to_value(a)?),
        Command::Estimate(a) => ("estimate", a.common.clone(), None, serde_json::to_value(a)?),
        Command::Calibrate(a) => ("calibrate", a.common.clone(), Some(a.seed), serde_json::to_value(a)?),
        Command::Evaluate(a) => ("evaluate", a.common.clone(), Some(a.seed), serde_json::to_value(a)?),
        Command::Ablate(a) => ("ablate", a.common.clone(), Some(a.seed), serde_json::to_value(a)?),
        Command::Classify(a) => ("classify", a.common.clone(), Some(a.seed), serde_json::to_value(a)?),
        Command::SelfTest(a) => ("self-test", a.common.clone(), None, serde_json::to_value(a)?),
    };
    let log = RunLog::start(name, config, seed, exec_name(&common));
    let mut out = Outputs::new(&common.out)?;
    let exec = exec_of(&common);
    let result = match cmd {
        Command::Gen(a) => gen(&a, &mut out, exec),
        Command::Render(a) => render(&a, &mut out, exec),
        Command::Sfs(a) => sfs(&a, &mut out),
        Command::TrainLst(a) => train_lst_cmd(&a, &mut out, exec),
        Command::TrainDepth(a) => train_depth_cmd(&a, &mut out, exec),
        Command::Estimate(a) => estimate(&a, &mut out),
        Command::Calibrate(a) => calibrate(&a, &mut out),
        Command::Evaluate(a) => evaluate(&a, &mut out, exec),
        Command::Ablate(a) => ablate(&a, &mut out, exec),
        Command::Classify(a) => classify(&a, &mut out, exec),
        Command::SelfTest(a) => self_test(&a, &mut out),
    };
    let status = result.as_ref().map(|_| ()).map_err(|e| e.to_string());
    log.finish(&common.out, &out.files, status)?;
    result
}

fn gen(a: &GenArgs, out: &mut Outputs, exec: Exec) -> Result<()> {
    if a.scenes == 0 || a.poses == 0 {
        return Err(Error::contract("cli", "--scenes and --poses must be positive"));
    }
    let scenes = (0..a.scenes)
        .map(|i| make_scene((i % 3) as u8, a.seed.wrapping_mul(1000).wrapping_add(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let spec = DatasetSpec {
        poses_per_scene: a.poses,
        fov_deg: a.fov,
        resolution: a.resolution,
        seed: a.seed,
    };
    let m = render_dataset(&scenes, &spec, &out.dir, exec)?;
    out.files.push("manifest.json".into());
    for e in &m.entries {
        out.files.push(e.image.clone());
        if let Some(d) = &e.depth {
            out.files.push(d.clone());
        }
    }
    Ok(())
}

fn render(a: &RenderArgs, out: &mut Outputs, exec: Exec) -> Result<()> {
    let scene = make_scene(a.family, a.scene_seed)?;
    let cam = sample_poses(&scene, 1, a.seed, a.fov, a.resolution)?[0];
    let (_, real, _) = render_pair(&scene, &cam, exec)?;
    let (lam, depth) = render_lambertian(&scene.with_material(scene.material.to_lambertian())?, &cam, exec)?;
    write_color(&out.path("lambertian.ppm"), &lam)?;
    write_color(&out.path("reallike.ppm"), &real)?;
    write_depth(&out.path("depth.pgm"), &depth)?;
    out.json("view.json", &json!({ "scene": scene, "camera": cam }))
}

fn sfs(a: &SfsArgs, out: &mut Outputs) -> Result<()> {
    let (m, root) = manifest_at(&a.data)?;
    let entry = m.entries.get(a.index).ok_or_else(|| {
        Error::contract(
            "cli",
            format!("index {} beyond {} manifest entries", a.index, m.entries.len()),
        )
    })?;
    let camera = entry
        .camera
        .ok_or_else(|| Error::contract("cli", format!("entry {} has no camera", entry.image)))?;
    let rho = match (a.rho, &entry.scene) {
        (Some(r), _) => r,
        (None, Some(s)) => s.material.rho,
        (None, None) => return Err(Error::contract("cli", "no --rho given and the entry records no scene")),
    };
    let image = read_color(&root.join(&entry.image))?;
    let opts = SfsOptions {
        smoothness: a.smoothness,
        max_iterations: a.max_iterations,
        ..SfsOptions::default()
    };
    let res = sfs_reconstruct(&image, &camera, rho, &opts)?;
    write_depth(&out.path("depth.pgm"), &res.depth)?;
    let rmse = entry.scene.as_ref().map(|s| {
        let truth = depth_map(s, &camera, Exec::Sequential);
        let mask: Vec<bool> = truth.data.iter().map(|d| *d < MAX_DEPTH_MM).collect();
        endodepth::sfs::masked_rmse(&res.depth, &truth, &mask)
    });
    out.json(
        "sfs.json",
        &json!({
            "image": entry.image,
            "rho": rho,
            "objective": res.objective,
            "iterations": res.iterations,
            "converged": res.converged,
            "diverged": res.diverged,
            "rmse_mm": rmse,
        }),
    )
}

fn train_lst_cmd(a: &TrainLstArgs, out: &mut Outputs, exec: Exec) -> Result<()> {
    let (m, root) = manifest_at(&a.data)?;
    let real = load_images(m.by_domain(Domain::RealLike), &root)?;
    let lam = load_images(m.by_domain(Domain::Lambertian), &root)?;
    let res = image_resolution(if real.is_empty() { &lam } else { &real })?;
    let mut cfg = if a.desk {
        TrainConfig::desk_lst(a.seed)
    } else {
        TrainConfig::paper_lst(a.seed)
    };
    if let Some(n) = a.iterations {
        cfg.budget = Budget::Iterations(n);
    }
    cfg.batch = a.minibatch.unwrap_or(cfg.batch);
    cfg.learning_rate = a.lr.unwrap_or(cfg.learning_rate);
    cfg.cycle_weight = a.cycle_weight.unwrap_or(cfg.cycle_weight);
    cfg.identity_weight = a.identity_weight.unwrap_or(cfg.identity_weight);
    let gen_arch = ArchConfig::desk_translator().with_resolution(res);
    let disc_arch = ArchConfig::desk_discriminator().with_resolution(res);
    let models = train_lst(&real, &lam, gen_arch, disc_arch, &cfg, exec)?;
    let steps = models.log.len() as u64;
    let notes = json!({ "train": cfg, "real_images": real.len(), "lambertian_images": lam.len() });
    out.checkpoint("translator.ckpt", &models.forward, steps, notes.clone())?;
    out.checkpoint("translator-back.ckpt", &models.backward, steps, notes.clone())?;
    out.checkpoint("disc-lambertian.ckpt", &models.disc_lambertian, steps, notes.clone())?;
    out.checkpoint("disc-real.ckpt", &models.disc_real, steps, notes)?;
    out.json("lst-log.json", &models.log)
}

fn train_depth_cmd(a: &TrainDepthArgs, out: &mut Outputs, exec: Exec) -> Result<()> {
    let (m, root) = manifest_at(&a.data)?;
    let samples = load_depth_samples(m.by_domain(Domain::Lambertian), &root)?;
    let res = image_resolution(&samples.iter().map(|s| s.image.clone()).take(1).collect::<Vec<_>>())?;
    let mut cfg = if a.desk {
        TrainConfig::desk_depth(a.seed)
    } else {
        TrainConfig::paper_depth(a.seed)
    };
    if let Some(e) = a.epochs {
        cfg.budget = Budget::Epochs(e);
    }
    cfg.batch = a.minibatch.unwrap_or(cfg.batch);
    cfg.learning_rate = a.lr.unwrap_or(cfg.learning_rate);
    cfg.loss = match a.loss {
        LossArg::Me => DepthLoss::Me,
        LossArg::Mae => DepthLoss::Mae,
    };
    cfg.weights.lambda = a.lambda;
    let trained = train_depth(&samples, ArchConfig::desk_depth().with_resolution(res), &cfg, exec)?;
    let notes = json!({ "train": cfg, "pairs": samples.len() });
    out.checkpoint("depth.ckpt", &trained.net, trained.log.len() as u64, notes)?;
    out.json("depth-log.json", &trained.log)
}

fn estimate(a: &EstimateArgs, out: &mut Outputs) -> Result<()> {
    let (m, root) = manifest_at(&a.data)?;
    let net = model(&a.depth_net, ModelKind::Depth)?;
    let translator = translator_of(&a.lst)?;
    let correction = a.correction.as_deref().map(|p| read_correction(Some(p))).transpose()?;
    let domain = if a.lambertian {
        Domain::Lambertian
    } else {
        Domain::RealLike
    };
    let mut listing = Vec::new();
    for e in m.by_domain(domain) {
        let image = read_color(&root.join(&e.image))?;
        let d = infer_depth(&image, translator.as_ref(), &net)?;
        let name = format!("depth/{}.pgm", stem(e));
        write_depth(&out.path(&name), &d)?;
        let mut row = json!({ "image": e.image, "depth": name });
        if let Some(c) = correction {
            let corrected = correct_depth(&d, c);
            let cname = format!("corrected/{}.pgm", stem(e));
            write_depth(&out.path(&cname), &corrected.depth)?;
            row["corrected"] = json!(cname);
            row["clamped"] = json!(corrected.clamped);
        }
        listing.push(row);
    }
    out.json("estimates.json", &listing)
}

/// Point samples from every view of `domain` that records its scene.
fn point_samples(
    m: &Manifest,
    root: &Path,
    translator: Option<&ModelParams>,
    net: &ModelParams,
    per_view: usize,
    seed: u64,
) -> Result<(Vec<PointDepthSample>, Vec<(DepthMap, DepthMap)>)> {
    let mut pts = Vec::new();
    let mut maps = Vec::new();
    for (i, e) in m.by_domain(Domain::RealLike).enumerate() {
        let (Some(scene), Some(cam)) = (&e.scene, &e.camera) else {
            return Err(Error::contract(
                "cli",
                format!("entry {} lacks scene and camera", e.image),
            ));
        };
        let image: ColorImage = read_color(&root.join(&e.image))?;
        let est = infer_depth(&image, translator, net)?;
        pts.extend(sample_point_depths(
            scene,
            cam,
            &est,
            per_view,
            seed.wrapping_add(i as u64),
        )?);
        maps.push((est, depth_map(scene, cam, Exec::Sequential)));
    }
    Ok((pts, maps))
}

fn calibrate(a: &CalibrateArgs, out: &mut Outputs) -> Result<()> {
    let (m, root) = manifest_at(&a.data)?;
    let net = model(&a.depth_net, ModelKind::Depth)?;
    let translator = translator_of(&a.lst)?;
    let (pts, _) = point_samples(&m, &root, translator.as_ref(), &net, a.points_per_view, a.seed)?;
    let fit = fit_correction(&pts)?;
    out.json("correction.json", &fit)?;
    out.json("points.json", &pts)
}

fn evaluate(a: &EvaluateArgs, out: &mut Outputs, _exec: Exec) -> Result<()> {
    let (m, root) = manifest_at(&a.data)?;
    let net = model(&a.depth_net, ModelKind::Depth)?;
    let translator = translator_of(&a.lst)?;
    let params = read_correction(a.correction.as_deref())?;
    let (pts, maps) = point_samples(&m, &root, translator.as_ref(), &net, a.points_per_view, a.seed)?;
    let (mut se, mut sc, mut n) = (0.0, 0.0, 0usize);
    for (est, truth) in &maps {
        let corrected = correct_depth(est, params).depth;
        for ((t, e), c) in truth.data.iter().zip(&est.data).zip(&corrected.data) {
            if *t < MAX_DEPTH_MM {
                se += (t - e) * (t - e);
                sc += (t - c) * (t - c);
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::contract("cli", "no wall pixels in the evaluated views"));
    }
    let corrected_pts: Vec<PointDepthSample> = pts
        .iter()
        .map(|p| PointDepthSample {
            estimate: params.apply(p.estimate).clamp(0.0, MAX_DEPTH_MM),
            ..*p
        })
        .collect();
    let table = binned_table(&corrected_pts, &uniform_bins(0.0, MAX_DEPTH_MM + 1e-9, 10))?;
    let report = json!({
        "views": maps.len(),
        "points": pts.len(),
        "translated": translator.is_some(),
        "correction": params,
        "rmse_mm": (se / n as f64).sqrt(),
        "rmse_corrected_mm": (sc / n as f64).sqrt(),
        "pearson_r": pearson(&pts)?,
        "binned": table,
    });
    out.json("evaluation.json", &report)?;
    out.text("evaluation.txt", &table.to_text())
}

fn ablate(a: &AblateArgs, out: &mut Outputs, exec: Exec) -> Result<()> {
    let (train, train_root) = manifest_at(&a.train)?;
    let (test, test_root) = manifest_at(&a.test)?;
    let res = train
        .entries
        .first()
        .and_then(|e| e.camera)
        .map(|c| c.resolution)
        .ok_or_else(|| Error::contract("cli", "training manifest records no camera"))?;
    let mut cfg = AblationConfig::desk(a.seed).with_resolution(res);
    if !a.desk {
        cfg.lst = TrainConfig::paper_lst(a.seed);
        cfg.depth = TrainConfig::paper_depth(a.seed);
    }
    let models = AblationModels {
        translator: a.translator.clone(),
        depth_me: a.depth_me.clone(),
        depth_mae: a.depth_mae.clone(),
    };
    let outcome = ablation_run(&train, &train_root, &test, &test_root, &cfg, &models, exec)?;
    out.text("ablation.json", &outcome.report.to_json()?)?;
    out.text("ablation.txt", &outcome.report.to_text())?;
    let notes = json!({ "ablation": cfg });
    out.checkpoint("translator.ckpt", &outcome.translator, 0, notes.clone())?;
    out.checkpoint("depth-me.ckpt", &outcome.depth_me, 0, notes.clone())?;
    out.checkpoint("depth-mae.ckpt", &outcome.depth_mae, 0, notes)
}

fn classify(a: &ClassifyArgs, out: &mut Outputs, exec: Exec) -> Result<()> {
    let (m, root) = manifest_at(&a.data)?;
    let net = a.depth_net.as_deref().map(|p| model(p, ModelKind::Depth)).transpose()?;
    let translator = a
        .translator
        .as_deref()
        .map(|p| model(p, ModelKind::Translator))
        .transpose()?;
    let source = match a.depth {
        DepthArg::None => DepthSource::None,
        DepthArg::True => DepthSource::GroundTruth,
        DepthArg::Estimated => DepthSource::Estimated {
            translator: translator.as_ref(),
            net: net
                .as_ref()
                .ok_or_else(|| Error::contract("cli", "--depth estimated needs --depth-net"))?,
        },
    };
    let views = labeled_views(&m, &root, Domain::RealLike, source, exec)?;
    let res = image_resolution(&views.iter().take(1).map(|v| v.input.clone()).collect::<Vec<_>>())?;
    let mut cfg = ClassifyConfig::desk(a.seed);
    cfg.arch = cfg.arch.with_resolution(res);
    cfg.repeats = a.repeats;
    cfg.shuffle_labels = a.shuffle_labels;
    cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
    let arm = if a.shuffle_labels {
        format!("{} (shuffled)", source.name())
    } else {
        source.name().to_string()
    };
    let result = downstream_classification(&views, &arm, &cfg, exec)?;
    out.json("classify.json", &json!({ "config": cfg, "result": result }))?;
    out.text("classify.txt", &result.to_text())
}

fn self_test(a: &SelfTestArgs, out: &mut Outputs) -> Result<()> {
    let sub = a.common.out.join("gen");
    run(Command::Gen(GenArgs {
        scenes: 1,
        poses: 1,
        seed: 0,
        resolution: 16,
        fov: 90.0,
        common: Common {
            out: sub.clone(),
            sequential: true,
        },
    }))?;
    let path = sub.join(runlog::FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let doc: Value = serde_json::from_str(&text)?;
    runlog::validate(&doc).map_err(|m| Error::contract("cli", m))?;
    if doc["status"] != "ok" || doc["command"] != "gen" {
        return Err(Error::contract("cli", format!("unexpected run log {doc}")));
    }
    out.json("self-test.json", &json!({ "checked": runlog::KEYS, "status": "ok" }))
}
