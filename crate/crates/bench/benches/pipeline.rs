use std::hint::black_box;

use clutter::net::{augment_d4, Checkpoint, ModelKind};
use clutter::pipeline::{ensemble_vote, kmeans_geo, Ensemble, TwoStagePipeline, Vote};
use clutter::stats::{chi_squared1_upper_tail, mcnemar_one_sided, ContingencyTable, Direction};
use clutter::ClutterLabel;
use clutter_bench::{rng, texture_batch, texture_image};
use criterion::{criterion_group, criterion_main, Criterion};
use rand::Rng;

fn ensemble(c: &mut Criterion) {
    let members: Vec<TwoStagePipeline> = (0..5)
        .map(|fold| {
            let ck = |kind: ModelKind| Checkpoint::initialize(kind, kind.default_config(), fold * 10 + kind as u64).unwrap();
            TwoStagePipeline::new(ck(ModelKind::Stage1), ck(ModelKind::Stage2Tree), ck(ModelKind::Stage2Building)).unwrap()
        })
        .collect();
    let ens = Ensemble::two_stage(members).unwrap();
    let image = texture_batch(1, 112, 1);
    let one = clutter::nn::Tensor::new(vec![3, 112, 112], image.into_data()).unwrap();
    let mut g = c.benchmark_group("ensemble");
    g.sample_size(20);
    g.bench_function("two-stage classify, 5 members", |b| b.iter(|| ens.classify(black_box(&one)).unwrap()));
    g.finish();
}

fn clustering(c: &mut Criterion) {
    let mut r = rng(2);
    let points: Vec<[f64; 2]> = (0..10_000)
        .map(|i| {
            let a = std::f64::consts::TAU * (i % 5) as f64 / 5.0;
            [5e3 * a.cos() + r.random_range(-400.0..400.0), 5e3 * a.sin() + r.random_range(-400.0..400.0)]
        })
        .collect();
    c.bench_function("kmeans k=5 on 10k points", |b| b.iter(|| kmeans_geo(black_box(&points), 5, 3, 300).unwrap()));
}

fn augmentation(c: &mut Criterion) {
    let img = texture_image(ClutterLabel::Coniferous, 112, 3);
    c.bench_function("d4 views of 112px image", |b| b.iter(|| augment_d4(black_box(&img)).unwrap()));
}

fn statistics(c: &mut Criterion) {
    let mut r = rng(4);
    let votes: Vec<Vote<ClutterLabel>> =
        (0..5).map(|_| Vote { label: ClutterLabel::ALL[r.random_range(0..5)], probability: r.random() }).collect();
    c.bench_function("ensemble vote of 5", |b| b.iter(|| ensemble_vote(black_box(&votes), &ClutterLabel::ALL)));
    let t = ContingencyTable { n_bothcorrect: 5000, n_2only: 320, n_1only: 210, n_bothwrong: 400 };
    c.bench_function("mcnemar one-sided", |b| b.iter(|| mcnemar_one_sided(black_box(&t), Direction::Greater)));
    c.bench_function("chi2(1) tail", |b| b.iter(|| chi_squared1_upper_tail(black_box(42.0))));
}

criterion_group!(benches, ensemble, clustering, augmentation, statistics);
criterion_main!(benches);
