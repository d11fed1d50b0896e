//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 3 7`.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use endodepth::eval::{
    ablation::{ARM_NO_LST, ARM_PROPOSED},
    ablation_run, downstream_classification, fit_correction, labeled_views, pearson, AblationConfig, AblationModels,
    ClassifyConfig, CorrectionParams, DepthSource, PointDepthSample,
};
use endodepth::exec::Exec;
use endodepth::imgio::{
    decode_depth, depth_to_intensity, encode_depth, intensity_to_depth, DepthMap, Domain, Manifest,
};
use endodepth::losses::{composite_loss, l1_loss, multiscale_edge_loss, ssim_loss, Grid, LossValue, LossWeights};
use endodepth::nets::tape::{ConvRef, DenseRef, NormRef};
use endodepth::nets::{
    load_depth_samples, load_images, train_depth, train_lst, ArchConfig, Budget, NodeId, Tape, Tensor, TrainConfig,
};
use endodepth::render::{render_dataset, render_pair, DatasetSpec};
use endodepth::scenegen::{make_scene, Camera, Material, Scene};
use endodepth::sfs::{masked_rmse, sfs_reconstruct, SfsOptions, SfsProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Check = fn() -> Outcome;

const CRITERIA: [(u32, &str, Option<u64>, Check); 9] = [
    (1, "loss identities", Some(1), loss_identities),
    (2, "finite-difference gradients", Some(30), gradients),
    (3, "render/SfS oracle on a tube", Some(120), sfs_oracle),
    (4, "depth net overfits 8 pairs", Some(300), overfit),
    (5, "LST cycle loss falls", Some(600), lst_signal),
    (6, "ablation: LST+ME r >= no-LST r", Some(1200), ablation),
    (7, "correction and correlation algebra", None, correction_algebra),
    (8, "downstream classification", Some(600), classification),
    (9, "codec round trip and CLI determinism", None, determinism),
];

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, budget, check) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let elapsed = t.elapsed();
        let in_time = budget.is_none_or(|b| elapsed <= Duration::from_secs(b));
        let pass = result.pass && in_time;
        let limit = budget.map(|b| format!(" / {b} s")).unwrap_or_default();
        let late = if in_time { "" } else { " OVER TIME" };
        println!(
            "{} [{id}] {name}: {} ({:.1} s{limit}{late})",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64()
        );
        failed += usize::from(!pass);
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- helpers

fn random_map(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(5.0..95.0)).collect()
}

fn random_tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor {
    Tensor::from_vec(c, h, w, (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Renders the desk dataset the way `endodepth gen` does.
fn desk_dataset(scenes: usize, poses: usize, seed: u64, dir: &Path) -> Manifest {
    let scenes: Vec<Scene> = (0..scenes)
        .map(|i| make_scene((i % 3) as u8, seed * 1000 + i as u64).unwrap())
        .collect();
    let spec = DatasetSpec {
        poses_per_scene: poses,
        fov_deg: 90.0,
        resolution: 64,
        seed,
    };
    render_dataset(&scenes, &spec, dir, Exec::Parallel).unwrap()
}

fn family_dataset(count: u64, first_seed: u64, poses: usize, seed: u64, dir: &Path) -> Manifest {
    let scenes: Vec<Scene> = (0..count)
        .map(|i| make_scene((i % 3) as u8, first_seed + i).unwrap())
        .collect();
    let spec = DatasetSpec {
        poses_per_scene: poses,
        fov_deg: 90.0,
        resolution: 64,
        seed,
    };
    render_dataset(&scenes, &spec, dir, Exec::Parallel).unwrap()
}

// ---------------------------------------------------------------- 1

fn loss_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let a = random_map(&mut rng, 256);
        let g = Grid::new(16, 16, &a);
        for f in [l1_loss, ssim_loss, multiscale_edge_loss] {
            worst = worst.max(f(g, g).unwrap().value.abs());
        }
        worst = worst.max(composite_loss(g, g, LossWeights::default()).unwrap().0.total.abs());
        // Dyadic values keep the offset exact in floating point.
        let q: Vec<f64> = a.iter().map(|x| (x * 64.0).round() / 64.0).collect();
        let shifted: Vec<f64> = q.iter().map(|x| x + 7.25).collect();
        worst = worst.max(
            multiscale_edge_loss(Grid::new(16, 16, &q), Grid::new(16, 16, &shifted))
                .unwrap()
                .value
                .abs(),
        );
    }
    let zeros = vec![0.0; 81];
    let mut impulse = zeros.clone();
    impulse[40] = 1.0;
    let v = multiscale_edge_loss(Grid::new(9, 9, &zeros), Grid::new(9, 9, &impulse))
        .unwrap()
        .value;
    outcome(
        worst == 0.0 && v == 12.0 / 81.0,
        format!(
            "max identity/offset loss {worst:e}, impulse {v} vs 12/81 = {}",
            12.0 / 81.0
        ),
    )
}

// ---------------------------------------------------------------- 2

fn fd_grad(f: impl Fn(&[f64]) -> f64, x0: &[f64], h: f64) -> Vec<f64> {
    let mut x = x0.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let dn = f(&x);
            x[i] = orig;
            (up - dn) / (2.0 * h)
        })
        .collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / norm(a).max(norm(b)).max(1e-300)
}

/// Relative error of the tape's input and parameter gradients of `Σ r ⊙ y`
/// against central differences.
fn operator_error<F>(inputs: Vec<Tensor>, params: Vec<f64>, build: F) -> f64
where
    F: Fn(&mut Tape, &[NodeId]) -> NodeId,
{
    let h = 1e-3;
    let eval = |inputs: &[Tensor], params: &[f64]| -> Tensor {
        let mut tape = Tape::new(vec![params]);
        let ids: Vec<NodeId> = inputs.iter().map(|t| tape.input(t.clone())).collect();
        let y = build(&mut tape, &ids);
        tape.value(y).clone()
    };
    let y0 = eval(&inputs, &params);
    let r = random_tensor(&mut ChaCha8Rng::seed_from_u64(99), y0.channels, y0.height, y0.width);
    let loss = |y: &Tensor| y.data.iter().zip(&r.data).map(|(a, b)| a * b).sum::<f64>();

    let mut tape = Tape::new(vec![&params]);
    let ids: Vec<NodeId> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let y = build(&mut tape, &ids);
    let grads = tape.backward(vec![(y, r.clone())]).unwrap();

    let mut worst = 0.0f64;
    for (k, inp) in inputs.iter().enumerate() {
        let fd = fd_grad(
            |x| {
                let mut v = inputs.clone();
                v[k].data.copy_from_slice(x);
                loss(&eval(&v, &params))
            },
            &inp.data,
            h,
        );
        worst = worst.max(rel_err(&grads.node(ids[k]).unwrap().data, &fd));
    }
    if !params.is_empty() {
        let fd = fd_grad(|p| loss(&eval(&inputs, p)), &params, h);
        worst = worst.max(rel_err(&grads.params[0], &fd));
    }
    worst
}

fn gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut loss_worst = 0.0f64;
    for _ in 0..10 {
        let a = random_map(&mut rng, 256);
        // At least 0.5 mm apart so no pixel sits on the L1 kink.
        let b: Vec<f64> = a
            .iter()
            .map(|x| x + if rng.random_bool(0.5) { 1.0 } else { -1.0 } * rng.random_range(0.5..4.0))
            .collect();
        let ga = Grid::new(16, 16, &a);
        let check = |f: fn(Grid, Grid) -> endodepth::error::Result<LossValue>| {
            let an = f(ga, Grid::new(16, 16, &b)).unwrap().grad;
            rel_err(&an, &fd_grad(|x| f(ga, Grid::new(16, 16, x)).unwrap().value, &b, 1e-4))
        };
        loss_worst = loss_worst
            .max(check(l1_loss))
            .max(check(ssim_loss))
            .max(check(multiscale_edge_loss));
        let (_, an) = composite_loss(ga, Grid::new(16, 16, &b), LossWeights::default()).unwrap();
        let fd = fd_grad(
            |x| {
                composite_loss(ga, Grid::new(16, 16, x), LossWeights::default())
                    .unwrap()
                    .0
                    .total
            },
            &b,
            1e-4,
        );
        loss_worst = loss_worst.max(rel_err(&an, &fd));
    }

    let x = random_tensor(&mut rng, 2, 8, 8);
    // Away from the rectifier kinks.
    let mut xk = x.clone();
    xk.data
        .iter_mut()
        .filter(|v| v.abs() < 1e-2)
        .for_each(|v| *v = v.signum() * 2e-2);
    let conv = |stride| ConvRef {
        model: 0,
        weight: 0,
        bias: 3 * 2 * 9,
        cin: 2,
        cout: 3,
        stride,
    };
    let norm = NormRef {
        model: 0,
        gamma: 0,
        beta: 2,
        channels: 2,
    };
    let dense = DenseRef {
        model: 0,
        weight: 0,
        bias: 4 * 128,
        inputs: 128,
        outputs: 4,
    };
    let conv_p: Vec<f64> = (0..3 * 2 * 9 + 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm_p: Vec<f64> = (0..4).map(|_| rng.random_range(0.5..1.5)).collect();
    let dense_p: Vec<f64> = (0..4 * 128 + 4).map(|_| rng.random_range(-0.1..0.1)).collect();
    let other = random_tensor(&mut rng, 1, 8, 8);
    let ops: Vec<(&str, f64)> = vec![
        (
            "conv s1",
            operator_error(vec![x.clone()], conv_p.clone(), |t, i| t.conv(i[0], conv(1)).unwrap()),
        ),
        (
            "conv s2",
            operator_error(vec![x.clone()], conv_p, |t, i| t.conv(i[0], conv(2)).unwrap()),
        ),
        (
            "instance norm",
            operator_error(vec![x.clone()], norm_p, |t, i| t.norm(i[0], norm).unwrap()),
        ),
        (
            "leaky relu",
            operator_error(vec![xk.clone()], vec![], |t, i| t.leaky(i[0], 0.2)),
        ),
        ("relu", operator_error(vec![xk], vec![], |t, i| t.relu(i[0]))),
        (
            "sigmoid",
            operator_error(vec![x.clone()], vec![], |t, i| t.sigmoid(i[0])),
        ),
        ("tanh", operator_error(vec![x.clone()], vec![], |t, i| t.tanh(i[0]))),
        (
            "affine",
            operator_error(vec![x.clone()], vec![], |t, i| t.affine(i[0], 0.5, 0.5)),
        ),
        (
            "upsample",
            operator_error(vec![x.clone()], vec![], |t, i| t.upsample(i[0])),
        ),
        (
            "concat",
            operator_error(vec![x.clone(), other], vec![], |t, i| t.concat(i[0], i[1]).unwrap()),
        ),
        ("mean", operator_error(vec![x.clone()], vec![], |t, i| t.mean(i[0]))),
        (
            "dense",
            operator_error(vec![x], dense_p, |t, i| t.dense(i[0], dense).unwrap()),
        ),
    ];
    let (op_name, op_worst) = ops
        .iter()
        .cloned()
        .fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    outcome(
        loss_worst < 1e-4 && op_worst < 1e-3,
        format!("losses max rel {loss_worst:.2e} (< 1e-4), operators max rel {op_worst:.2e} at {op_name} (< 1e-3)"),
    )
}

// ---------------------------------------------------------------- 3

fn sfs_oracle() -> Outcome {
    let cam = Camera::looking_down_z(90.0, 128).unwrap();
    let material = Material {
        rho: 0.8,
        spec_strength: 0.4,
        spec_exponent: 20.0,
        texture_amplitude: 0.5,
        texture_seed: 0,
        tint: [1.0; 3],
    };
    let scene = Scene::straight_tube(12.0, 400.0, material).unwrap();
    let (lam, real, truth) = render_pair(&scene, &cam, Exec::Parallel).unwrap();
    let lit = SfsProblem::new(lam.luminance(), &cam, 0.8, 0.1, 1.0)
        .unwrap()
        .lit()
        .to_vec();
    let opts = SfsOptions::default();
    let a = masked_rmse(&sfs_reconstruct(&lam, &cam, 0.8, &opts).unwrap().depth, &truth, &lit);
    let b = masked_rmse(&sfs_reconstruct(&real, &cam, 0.8, &opts).unwrap().depth, &truth, &lit);
    outcome(
        a < 2.0 && b > a,
        format!("Lambertian RMSE {a:.3} mm (< 2), real-like RMSE {b:.3} mm (> Lambertian)"),
    )
}

// ---------------------------------------------------------------- 4

fn overfit() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let m = desk_dataset(6, 10, 1, dir.path());
    let entries: Vec<_> = m.by_domain(Domain::Lambertian).take(8).cloned().collect();
    let pairs = load_depth_samples(entries.iter(), dir.path()).unwrap();
    let mut cfg = TrainConfig::desk_depth(0);
    cfg.budget = Budget::Iterations(2000);
    cfg.batch = 8;
    cfg.stop_below = Some(0.05);
    let out = train_depth(&pairs, ArchConfig::desk_depth(), &cfg, Exec::Parallel).unwrap();
    let last = out.log.last().unwrap();
    outcome(
        last.loss < 0.05 && last.step <= 2000,
        format!(
            "composite loss {:.5} at step {} (< 0.05 within 2000)",
            last.loss, last.step
        ),
    )
}

// ---------------------------------------------------------------- 5

fn lst_signal() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let m = desk_dataset(6, 10, 1, dir.path());
    let real = load_images(m.by_domain(Domain::RealLike), dir.path()).unwrap();
    let lam = load_images(m.by_domain(Domain::Lambertian), dir.path()).unwrap();
    let cfg = TrainConfig::desk_lst(0);
    let out = train_lst(
        &real,
        &lam,
        ArchConfig::desk_translator(),
        ArchConfig::desk_discriminator(),
        &cfg,
        Exec::Parallel,
    )
    .unwrap();
    let n = out.log.len() / 10;
    let mean = |r: &[_]| {
        r.iter()
            .map(|x: &endodepth::nets::train::LstLogRecord| x.cycle)
            .sum::<f64>()
            / n as f64
    };
    let first = mean(&out.log[..n]);
    let last = mean(&out.log[out.log.len() - n..]);
    outcome(
        real.len() == 60 && lam.len() == 60 && out.log.len() == 200 && last < 0.5 * first,
        format!(
            "{}+{} images, {} iterations, cycle loss {first:.4} -> {last:.4}, ratio {:.3} (< 0.5)",
            real.len(),
            lam.len(),
            out.log.len(),
            last / first
        ),
    )
}

// ---------------------------------------------------------------- 6

fn ablation() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (tr, te) = (dir.path().join("train"), dir.path().join("test"));
    let train = family_dataset(12, 100, 10, 1, &tr);
    let test = family_dataset(6, 900, 5, 2, &te);
    let cfg = AblationConfig::desk(0);
    let out = ablation_run(
        &train,
        &tr,
        &test,
        &te,
        &cfg,
        &AblationModels::default(),
        Exec::Parallel,
    )
    .unwrap();
    print!("{}", out.report.to_text());
    let r = |arm| out.report.arm(arm).unwrap().pearson_r;
    let (proposed, no_lst) = (r(ARM_PROPOSED), r(ARM_NO_LST));
    outcome(
        out.report.arms.len() == 3 && proposed >= no_lst,
        format!(
            "r(lst+me) {proposed:.4} vs r(no-lst) {no_lst:.4}, {} arms tabulated",
            out.report.arms.len()
        ),
    )
}

// ---------------------------------------------------------------- 7

fn correction_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut fit_worst = 0.0f64;
    let mut r_worst = 0.0f64;
    let cases = [(0.73, -3.0), (1.0, 0.0), (2.5, 11.0), (0.1, -0.5)];
    for (s, t) in cases {
        let samples: Vec<PointDepthSample> = (0..60)
            .map(|i| {
                let est = rng.random_range(5.0..80.0);
                PointDepthSample {
                    row: i,
                    col: i,
                    truth: s * est + t,
                    estimate: est,
                }
            })
            .collect();
        let fit = fit_correction(&samples).unwrap().params;
        fit_worst = fit_worst.max((fit.s - s).abs()).max((fit.t - t).abs());
    }
    for _ in 0..20 {
        let samples: Vec<PointDepthSample> = (0..60)
            .map(|i| {
                let truth = rng.random_range(5.0..80.0);
                PointDepthSample {
                    row: i,
                    col: 0,
                    truth,
                    estimate: truth + rng.random_range(-10.0..10.0),
                }
            })
            .collect();
        let c = CorrectionParams {
            s: rng.random_range(0.05..5.0),
            t: rng.random_range(-20.0..20.0),
        };
        let corrected: Vec<PointDepthSample> = samples
            .iter()
            .map(|p| PointDepthSample {
                estimate: c.apply(p.estimate),
                ..*p
            })
            .collect();
        r_worst = r_worst.max((pearson(&samples).unwrap() - pearson(&corrected).unwrap()).abs());
    }
    outcome(
        fit_worst < 1e-9 && r_worst < 1e-12,
        format!("fit parameter error {fit_worst:.2e} (< 1e-9), Pearson change {r_worst:.2e} (< 1e-12)"),
    )
}

// ---------------------------------------------------------------- 8

fn classification() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let m = family_dataset(12, 500, 10, 9, dir.path());
    let cfg = ClassifyConfig::desk(1);
    let views = |src| labeled_views(&m, dir.path(), Domain::RealLike, src, Exec::Parallel).unwrap();
    let images = views(DepthSource::None);
    let img = downstream_classification(&images, "images", &cfg, Exec::Parallel).unwrap();
    let gt = downstream_classification(&views(DepthSource::GroundTruth), "gt-depth", &cfg, Exec::Parallel).unwrap();
    let shuffled_cfg = ClassifyConfig {
        shuffle_labels: true,
        ..cfg.clone()
    };
    let shuffled = downstream_classification(&images, "shuffled", &shuffled_cfg, Exec::Parallel).unwrap();
    for r in [&img, &gt, &shuffled] {
        print!("{}", r.to_text());
    }
    let chance = 1.0 / 3.0;
    outcome(
        gt.mean >= img.mean && (shuffled.mean - chance).abs() <= 0.1,
        format!(
            "GT depth {:.3} >= images {:.3}; shuffled {:.3} within 1/3 ± 0.1",
            gt.mean, img.mean, shuffled.mean
        ),
    )
}

// ---------------------------------------------------------------- 9

/// Every output file except run logs, which carry wall time.
fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "run-log.json" {
                files.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

fn cli(args: &[&str]) {
    let o = Command::new(env!("CARGO_BIN_EXE_endodepth"))
        .args(args)
        .output()
        .unwrap();
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn pipeline(dir: &Path) {
    let s = |p: PathBuf| p.to_str().unwrap().to_string();
    let data = s(dir.join("data"));
    let m = s(dir.join("data/manifest.json"));
    let tr = s(dir.join("lst/translator.ckpt"));
    let dn = s(dir.join("depth/depth.ckpt"));
    let cor = s(dir.join("calibrate/correction.json"));
    let out = |name: &str| s(dir.join(name));
    cli(&[
        "gen",
        "--scenes",
        "3",
        "--poses",
        "3",
        "--seed",
        "5",
        "--resolution",
        "32",
        "--out",
        &data,
    ]);
    cli(&[
        "render",
        "--family",
        "1",
        "--scene-seed",
        "4",
        "--seed",
        "1",
        "--resolution",
        "32",
        "--out",
        &out("render"),
    ]);
    cli(&[
        "sfs",
        "--data",
        &m,
        "--index",
        "0",
        "--max-iterations",
        "200",
        "--out",
        &out("sfs"),
    ]);
    cli(&[
        "train-lst",
        "--data",
        &m,
        "--seed",
        "3",
        "--desk",
        "--iterations",
        "2",
        "--minibatch",
        "2",
        "--out",
        &out("lst"),
    ]);
    cli(&[
        "train-depth",
        "--data",
        &m,
        "--seed",
        "3",
        "--desk",
        "--epochs",
        "1",
        "--minibatch",
        "4",
        "--out",
        &out("depth"),
    ]);
    cli(&[
        "calibrate",
        "--data",
        &m,
        "--depth-net",
        &dn,
        "--translator",
        &tr,
        "--seed",
        "1",
        "--out",
        &out("calibrate"),
    ]);
    cli(&[
        "estimate",
        "--data",
        &m,
        "--depth-net",
        &dn,
        "--translator",
        &tr,
        "--correction",
        &cor,
        "--out",
        &out("estimate"),
    ]);
    cli(&[
        "evaluate",
        "--data",
        &m,
        "--depth-net",
        &dn,
        "--no-lst",
        "--correction",
        &cor,
        "--seed",
        "2",
        "--out",
        &out("evaluate"),
    ]);
    cli(&[
        "ablate",
        "--train",
        &m,
        "--test",
        &m,
        "--seed",
        "1",
        "--desk",
        "--translator",
        &tr,
        "--depth-me",
        &dn,
        "--depth-mae",
        &dn,
        "--out",
        &out("ablate"),
    ]);
    cli(&[
        "classify",
        "--data",
        &m,
        "--seed",
        "1",
        "--depth",
        "estimated",
        "--depth-net",
        &dn,
        "--translator",
        &tr,
        "--repeats",
        "2",
        "--epochs",
        "1",
        "--out",
        &out("classify"),
    ]);
    cli(&["self-test", "--out", &out("self-test")]);
}

fn determinism() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut codec_ok = true;
    for (w, h) in [(1, 1), (7, 5), (64, 64)] {
        let data: Vec<f64> = (0..w * h)
            .map(|_| intensity_to_depth(depth_to_intensity(rng.random_range(0.0..100.0))))
            .collect();
        let d = DepthMap::from_vec(w, h, data).unwrap();
        let bytes = encode_depth(&d).unwrap();
        let back = decode_depth(&bytes).unwrap();
        codec_ok &= back == d && encode_depth(&back).unwrap() == bytes;
    }
    let t = tempfile::tempdir().unwrap();
    pipeline(&t.path().join("a"));
    pipeline(&t.path().join("b"));
    let (a, b) = (tree(&t.path().join("a")), tree(&t.path().join("b")));
    let differing: Vec<String> = a
        .iter()
        .filter(|(k, v)| b.get(*k) != Some(v))
        .map(|(k, _)| k.display().to_string())
        .collect();
    let same_keys = a.keys().eq(b.keys());
    outcome(
        codec_ok && same_keys && differing.is_empty(),
        format!(
            "depth codec exact: {codec_ok}; {} output files across 11 subcommands, differing: {:?}",
            a.len(),
            differing
        ),
    )
}
