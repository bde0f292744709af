//! Direct nested-loop definitions of the forward ops, used as oracles.

use clutter::nn::{conv2d_forward, fully_connected_forward, maxpool_forward, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOL: f64 = 1e-12;
pub const CASES: usize = 100;

fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn conv_oracle(x: &Tensor<f64>, w: &Tensor<f64>, b: Option<&Tensor<f64>>, same: bool) -> Vec<f64> {
    let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (o, k) = (w.shape()[0], w.shape()[2]);
    let pad = if same { (k - 1) / 2 } else { 0 };
    let (oh, ow) = if same { (h, wd) } else { (h - k + 1, wd - k + 1) };
    let xv = |ni: usize, ci: usize, y: isize, xx: isize| -> f64 {
        if y < 0 || xx < 0 || y >= h as isize || xx >= wd as isize {
            0.0
        } else {
            x.data()[((ni * c + ci) * h + y as usize) * wd + xx as usize]
        }
    };
    let mut out = Vec::new();
    for ni in 0..n {
        for oi in 0..o {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = b.map_or(0.0, |b| b.data()[oi]);
                    for ci in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let sy = y as isize + ky as isize - pad as isize;
                                let sx = xx as isize + kx as isize - pad as isize;
                                acc += w.data()[((oi * c + ci) * k + ky) * k + kx] * xv(ni, ci, sy, sx);
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

fn pool_oracle(x: &Tensor<f64>, win: usize, stride: usize) -> Vec<f64> {
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (oh, ow) = ((h - win) / stride + 1, (w - win) / stride + 1);
    let mut out = Vec::new();
    for p in 0..n * c {
        for y in 0..oh {
            for xx in 0..ow {
                let mut m = f64::NEG_INFINITY;
                for dy in 0..win {
                    for dx in 0..win {
                        m = m.max(x.data()[p * h * w + (y * stride + dy) * w + xx * stride + dx]);
                    }
                }
                out.push(m);
            }
        }
    }
    out
}

fn fc_oracle(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
    let (o, f) = (w.shape()[0], w.shape()[1]);
    let rows = x.numel() / f;
    let mut out = Vec::new();
    for r in 0..rows {
        for oi in 0..o {
            let mut acc = b.data()[oi];
            for j in 0..f {
                acc += w.data()[oi * f + j] * x.data()[r * f + j];
            }
            out.push(acc);
        }
    }
    out
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Largest deviation over all conv, pool and FC cases.
pub fn oracle_max_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for case in 0..CASES {
        let n = rng.random_range(1..=3);
        let c = rng.random_range(1..=4);
        let h = rng.random_range(3..=9);
        let w = rng.random_range(3..=9);
        let o = rng.random_range(1..=5);
        let k = [1, 3][rng.random_range(0..2)];
        let same = case % 2 == 0;
        let x = random_tensor(&mut rng, vec![n, c, h, w]);
        let wt = random_tensor(&mut rng, vec![o, c, k, k]);
        let b = random_tensor(&mut rng, vec![o]);
        let bias = (case % 3 != 0).then_some(&b);
        let got = conv2d_forward(&x, &wt, bias, same).unwrap();
        worst = worst.max(max_abs_diff(got.data(), &conv_oracle(&x, &wt, bias, same)));

        let (win, stride) = [(2, 2), (3, 1), (2, 1), (3, 2)][case % 4];
        let got = maxpool_forward(&x, win, stride).unwrap();
        worst = worst.max(max_abs_diff(got.output.data(), &pool_oracle(&x, win, stride)));

        let f = c * h * w;
        let fw = random_tensor(&mut rng, vec![o, f]);
        let got = fully_connected_forward(&x, &fw, &b).unwrap();
        worst = worst.max(max_abs_diff(got.data(), &fc_oracle(&x, &fw, &b)));
    }
    worst
}

