use std::hint::black_box;

use clutter::net::{build_network, ModelKind};
use clutter::nn::ops::{conv2d_backward, maxpool_forward};
use clutter::nn::{conv2d_forward, head_loss, Mode, Network};
use clutter_bench::{random_tensor, rng, texture_batch};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn conv(c: &mut Criterion) {
    let mut g = c.benchmark_group("conv3x3");
    for (cin, side) in [(3, 112), (16, 56), (16, 14)] {
        let x = random_tensor(vec![8, cin, side, side], 1);
        let w = random_tensor(vec![16, cin, 3, 3], 2);
        let b = random_tensor(vec![16], 3);
        let gy = random_tensor(vec![8, 16, side, side], 4);
        g.bench_with_input(BenchmarkId::new("forward", format!("{cin}x{side}")), &(), |bench, _| {
            bench.iter(|| conv2d_forward(black_box(&x), &w, Some(&b), true).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("backward", format!("{cin}x{side}")), &(), |bench, _| {
            bench.iter(|| conv2d_backward(black_box(&x), &w, &gy, true).unwrap())
        });
    }
    g.finish();
}

fn pool(c: &mut Criterion) {
    let x = random_tensor(vec![8, 16, 112, 112], 5);
    c.bench_function("maxpool 2x2 8x16x112", |b| b.iter(|| maxpool_forward(black_box(&x), 2, 2).unwrap()));
}

fn network(c: &mut Criterion) {
    let mut g = c.benchmark_group("network");
    g.sample_size(20);
    for kind in [ModelKind::Stage1, ModelKind::Stage2Tree] {
        let mut net: Network<f32> = build_network(&kind.default_config(), &mut rng(6)).unwrap();
        let single = texture_batch(1, 112, 7);
        g.bench_function(BenchmarkId::new("infer", kind.as_str()), |b| b.iter(|| net.infer(black_box(&single)).unwrap()));
        let batch = texture_batch(32, 112, 8);
        let targets: Vec<usize> = (0..32).map(|i| i % kind.classes().len()).collect();
        let head = kind.head();
        let mut r = rng(9);
        g.bench_function(BenchmarkId::new("train step batch 32", kind.as_str()), |b| {
            b.iter(|| {
                let logits = net.forward(&batch, Mode::Train, &mut r).unwrap();
                let (_, grad) = head_loss(head, &logits, &targets).unwrap();
                net.backward(&grad).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, conv, pool, network);
criterion_main!(benches);
