//! Sequential against pooled execution for the three hot loops: rendering,
//! a depth-network minibatch step, and a translator minibatch step.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use endodepth::exec::Exec;
use endodepth::nets::train::{train_depth, train_lst, Budget, DepthSample, TrainConfig};
use endodepth::nets::{ArchConfig, Tensor};
use endodepth::render::{render_lambertian, render_pair};
use endodepth::scenegen::{make_scene, sample_poses};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn render(c: &mut Criterion) {
    let scene = make_scene(1, 3).unwrap();
    let cam = sample_poses(&scene, 1, 3, 90.0, 64).unwrap()[0];
    let mut g = c.benchmark_group("render_pair_64");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| render_pair(black_box(&scene), &cam, exec).unwrap())
        });
    }
    g.finish();
}

fn samples(n: usize) -> Vec<DepthSample> {
    (0..n)
        .map(|i| {
            let scene = make_scene((i % 3) as u8, i as u64).unwrap();
            let lam = scene.with_material(scene.material.to_lambertian()).unwrap();
            let cam = sample_poses(&scene, 1, i as u64, 90.0, 64).unwrap()[0];
            let (img, depth) = render_lambertian(&lam, &cam, Exec::Sequential).unwrap();
            DepthSample::new(&img, &depth).unwrap()
        })
        .collect()
}

fn depth_step(c: &mut Criterion) {
    let data = samples(8);
    let mut cfg = TrainConfig::desk_depth(0);
    cfg.budget = Budget::Iterations(1);
    let mut g = c.benchmark_group("depth_step_batch8");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| train_depth(black_box(&data), ArchConfig::desk_depth(), &cfg, exec).unwrap())
        });
    }
    g.finish();
}

fn lst_step(c: &mut Criterion) {
    let data = samples(4);
    let images: Vec<Tensor> = data.iter().map(|s| s.image.clone()).collect();
    let mut cfg = TrainConfig::desk_lst(0);
    cfg.budget = Budget::Iterations(1);
    let mut g = c.benchmark_group("lst_step_batch4");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                train_lst(
                    black_box(&images),
                    &images,
                    ArchConfig::desk_translator(),
                    ArchConfig::desk_discriminator(),
                    &cfg,
                    exec,
                )
                .unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, render, depth_step, lst_step);
criterion_main!(benches);
