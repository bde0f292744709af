//! Forward and backward kernels for the layer kinds the network uses.
//!
//! Spatial tensors are `NxCxHxW` (a bare `CxHxW` is accepted as a batch of
//! one by the public forward functions). Backward kernels take the cached
//! forward state and return gradients rather than mutating parameters.

use super::scalar::{axpy, dot, gemm, sum, Mat};
use super::{NnError, Real, Tensor};

fn padding(kernel: usize, same: bool) -> Result<usize, NnError> {
    if same {
        if kernel.is_multiple_of(2) {
            return Err(NnError::Config(format!(
                "same padding needs an odd kernel, got {kernel}"
            )));
        }
        Ok(kernel / 2)
    } else {
        Ok(0)
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    k: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn new<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, same: bool) -> Result<Self, NnError> {
        let (n, c, h, w) = input.as_batch()?;
        let [o, wc, k, k2] = *weights.shape() else {
            return Err(NnError::Shape(format!(
                "conv weights must be OxCxKxK, got {:?}",
                weights.shape()
            )));
        };
        if k != k2 {
            return Err(NnError::Shape(format!("non-square kernel {k}x{k2}")));
        }
        if wc != c {
            return Err(NnError::Shape(format!(
                "input has {c} channels but weights expect {wc}"
            )));
        }
        let pad = padding(k, same)?;
        if h + 2 * pad < k || w + 2 * pad < k {
            return Err(NnError::Shape(format!("input {h}x{w} smaller than kernel {k}")));
        }
        Ok(Self { n, c, h, w, o, k, pad, oh: h + 2 * pad - k + 1, ow: w + 2 * pad - k + 1 })
    }

    /// Output row `oy` with kernel row `ky` reads input row `oy + ky - pad`.
    #[inline]
    fn in_row(&self, oy: usize, ky: usize) -> Option<usize> {
        let iy = oy + ky;
        (iy >= self.pad && iy - self.pad < self.h).then(|| iy - self.pad)
    }

    /// Output columns `[lo, hi)` whose kernel column `kx` lands inside the input.
    #[inline]
    fn col_range(&self, kx: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(kx);
        let hi = (self.w + self.pad).saturating_sub(kx).min(self.ow);
        (lo, hi.max(lo))
    }

    /// Unfold one `CxHxW` sample into a `(C*K*K) x (OH*OW)` tap matrix.
    fn im2col<T: Real>(&self, x: &[T], col: &mut [T]) {
        let plane_out = self.oh * self.ow;
        for c in 0..self.c {
            let src = &x[c * self.h * self.w..][..self.h * self.w];
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = &mut col[((c * self.k + ky) * self.k + kx) * plane_out..][..plane_out];
                    let (lo, hi) = self.col_range(kx);
                    for oy in 0..self.oh {
                        let dst = &mut row[oy * self.ow..][..self.ow];
                        match self.in_row(oy, ky) {
                            Some(iy) if lo < hi => {
                                dst[..lo].fill(T::zero());
                                let ix0 = lo + kx - self.pad;
                                dst[lo..hi].copy_from_slice(&src[iy * self.w + ix0..][..hi - lo]);
                                dst[hi..].fill(T::zero());
                            }
                            _ => dst.fill(T::zero()),
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Self::im2col`]: scatter-add tap gradients into `gx`.
    fn col2im<T: Real>(&self, col: &[T], gx: &mut [T]) {
        let plane_out = self.oh * self.ow;
        for c in 0..self.c {
            let dst = &mut gx[c * self.h * self.w..][..self.h * self.w];
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = &col[((c * self.k + ky) * self.k + kx) * plane_out..][..plane_out];
                    let (lo, hi) = self.col_range(kx);
                    if lo >= hi {
                        continue;
                    }
                    let ix0 = lo + kx - self.pad;
                    for oy in 0..self.oh {
                        if let Some(iy) = self.in_row(oy, ky) {
                            axpy(T::one(), &row[oy * self.ow + lo..][..hi - lo], &mut dst[iy * self.w + ix0..][..hi - lo]);
                        }
                    }
                }
            }
        }
    }
}

/// 2-D convolution (cross-correlation), stride 1, lowered to a matrix
/// product per sample. With `same_padding` out-of-bounds taps read as zero
/// and the spatial size is preserved.
pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    same_padding: bool,
) -> Result<Tensor<T>, NnError> {
    let g = ConvGeom::new(input, weights, same_padding)?;
    if let Some(b) = bias {
        if b.numel() != g.o {
            return Err(NnError::Shape(format!("bias length {} != {} outputs", b.numel(), g.o)));
        }
    }
    let x = input.data();
    let plane_in = g.c * g.h * g.w;
    let plane_out = g.oh * g.ow;
    let taps = g.c * g.k * g.k;
    let mut col = vec![T::zero(); taps * plane_out];
    let mut out = vec![T::zero(); g.n * g.o * plane_out];
    let wmat = Mat::rm(weights.data(), g.o, taps);
    for n in 0..g.n {
        g.im2col(&x[n * plane_in..][..plane_in], &mut col);
        let dst = &mut out[n * g.o * plane_out..][..g.o * plane_out];
        let beta = match bias {
            Some(b) => {
                for (o, row) in dst.chunks_exact_mut(plane_out).enumerate() {
                    row.fill(b.data()[o]);
                }
                T::one()
            }
            None => T::zero(),
        };
        gemm(wmat, Mat::rm(&col, taps, plane_out), beta, dst);
    }
    let shape = if input.rank() == 3 { vec![g.o, g.oh, g.ow] } else { vec![g.n, g.o, g.oh, g.ow] };
    Tensor::new(shape, out)
}

pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
    same_padding: bool,
) -> Result<ConvGrads<T>, NnError> {
    let g = ConvGeom::new(input, weights, same_padding)?;
    let plane_in = g.c * g.h * g.w;
    let plane_out = g.oh * g.ow;
    if grad_out.numel() != g.n * g.o * plane_out {
        return Err(NnError::Shape(format!(
            "conv output gradient has {} elements, expected {}",
            grad_out.numel(),
            g.n * g.o * plane_out
        )));
    }
    let taps = g.c * g.k * g.k;
    let x = input.data();
    let gy = grad_out.data();
    let mut gx = vec![T::zero(); x.len()];
    let mut gw = vec![T::zero(); weights.numel()];
    let mut gb = vec![T::zero(); g.o];
    let mut col = vec![T::zero(); taps * plane_out];
    let mut gcol = vec![T::zero(); taps * plane_out];
    let wmat = Mat::rm(weights.data(), g.o, taps);
    for n in 0..g.n {
        let go = &gy[n * g.o * plane_out..][..g.o * plane_out];
        for (o, row) in go.chunks_exact(plane_out).enumerate() {
            gb[o] += sum(row);
        }
        g.im2col(&x[n * plane_in..][..plane_in], &mut col);
        let gomat = Mat::rm(go, g.o, plane_out);
        gemm(gomat, Mat::rm(&col, taps, plane_out).t(), T::one(), &mut gw);
        gemm(wmat.t(), gomat, T::zero(), &mut gcol);
        g.col2im(&gcol, &mut gx[n * plane_in..][..plane_in]);
    }
    Ok(ConvGrads {
        input: Tensor::new(input.shape().to_vec(), gx)?,
        weights: Tensor::new(weights.shape().to_vec(), gw)?,
        bias: Tensor::new(vec![g.o], gb)?,
    })
}

/// Max pooling result plus the flat input index chosen for every output.
pub struct Pooled<T> {
    pub output: Tensor<T>,
    pub argmax: Vec<usize>,
}

/// Max pooling with floor semantics: trailing rows/columns that do not fill a
/// window are dropped. Ties go to the first element in row-major order.
pub fn maxpool_forward<T: Real>(
    input: &Tensor<T>,
    window: usize,
    stride: usize,
) -> Result<Pooled<T>, NnError> {
    let (n, c, h, w) = input.as_batch()?;
    if window == 0 || stride == 0 {
        return Err(NnError::Config("pool window and stride must be positive".into()));
    }
    if h < window || w < window {
        return Err(NnError::Shape(format!("input {h}x{w} smaller than pool window {window}")));
    }
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    if window == 2 && stride == 2 {
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                let r0 = base + 2 * oy * w;
                let (top, bottom) = (&x[r0..r0 + 2 * ow], &x[r0 + w..r0 + w + 2 * ow]);
                for ox in 0..ow {
                    // same visiting order and strict comparison as the general path
                    let (mut best, mut v) = (0, top[2 * ox]);
                    for (j, cand) in [(1, top[2 * ox + 1]), (w, bottom[2 * ox]), (w + 1, bottom[2 * ox + 1])] {
                        if cand > v {
                            best = j;
                            v = cand;
                        }
                    }
                    out.push(v);
                    argmax.push(r0 + 2 * ox + best);
                }
            }
        }
        let shape = if input.rank() == 3 { vec![c, oh, ow] } else { vec![n, c, oh, ow] };
        return Ok(Pooled { output: Tensor::new(shape, out)?, argmax });
    }
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * stride * w + ox * stride;
                for dy in 0..window {
                    for dx in 0..window {
                        let idx = base + (oy * stride + dy) * w + ox * stride + dx;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    let shape = if input.rank() == 3 { vec![c, oh, ow] } else { vec![n, c, oh, ow] };
    Ok(Pooled { output: Tensor::new(shape, out)?, argmax })
}

pub fn maxpool_backward<T: Real>(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    if grad_out.numel() != argmax.len() {
        return Err(NnError::Shape("pool gradient does not match recorded argmax".into()));
    }
    let mut gx = Tensor::zeros(input_shape.to_vec());
    let g = gx.data_mut();
    for (&idx, &v) in argmax.iter().zip(grad_out.data()) {
        g[idx] += v;
    }
    Ok(gx)
}

pub fn relu_forward<T: Real>(input: &Tensor<T>) -> (Tensor<T>, Vec<bool>) {
    let mask: Vec<bool> = input.data().iter().map(|&v| v > T::zero()).collect();
    let data = input.data().iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
    (Tensor::new(input.shape().to_vec(), data).expect("same shape"), mask)
}

pub fn relu_backward<T: Real>(mask: &[bool], grad_out: &Tensor<T>) -> Tensor<T> {
    let data = grad_out
        .data()
        .iter()
        .zip(mask)
        .map(|(&g, &m)| if m { g } else { T::zero() })
        .collect();
    Tensor::new(grad_out.shape().to_vec(), data).expect("same shape")
}

/// Per-channel batch statistics captured by a training-mode pass.
#[derive(Clone, Debug)]
pub struct BatchNormTrace<T> {
    pub normalized: Vec<T>,
    pub inv_std: Vec<T>,
    pub batch_mean: Vec<T>,
    /// Biased (population) variance of the batch.
    pub batch_var: Vec<T>,
    pub train: bool,
}

fn bn_dims<T: Real>(input: &Tensor<T>, channels: usize) -> Result<(usize, usize), NnError> {
    let s = input.shape();
    if s.len() < 2 || s[1] != channels {
        return Err(NnError::Shape(format!(
            "batch norm over {channels} channels got input {s:?}"
        )));
    }
    Ok((s[0], s[2..].iter().product()))
}

/// Batch normalization of an `NxC[xHxW]` batch. Training mode normalizes by
/// batch statistics; evaluation mode by the supplied running statistics.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm_forward<T: Real>(
    input: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    running_mean: &[T],
    running_var: &[T],
    epsilon: T,
    train: bool,
) -> Result<(Tensor<T>, BatchNormTrace<T>), NnError> {
    let channels = gamma.len();
    let (n, spatial) = bn_dims(input, channels)?;
    if train && n < 2 {
        return Err(NnError::BatchTooSmall(n));
    }
    let x = input.data();
    let count = T::of((n * spatial) as f64);
    let mut mean = vec![T::zero(); channels];
    let mut var = vec![T::zero(); channels];
    if train {
        for c in 0..channels {
            let mut s = T::zero();
            for b in 0..n {
                s += sum(&x[(b * channels + c) * spatial..][..spatial]);
            }
            let m = s / count;
            let mut v = T::zero();
            for b in 0..n {
                for &xi in &x[(b * channels + c) * spatial..][..spatial] {
                    v += (xi - m) * (xi - m);
                }
            }
            mean[c] = m;
            var[c] = v / count;
        }
    } else {
        mean.copy_from_slice(running_mean);
        var.copy_from_slice(running_var);
    }
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + epsilon).sqrt()).collect();
    let mut normalized = vec![T::zero(); x.len()];
    let mut out = vec![T::zero(); x.len()];
    for b in 0..n {
        for c in 0..channels {
            let off = (b * channels + c) * spatial;
            for i in off..off + spatial {
                let xh = (x[i] - mean[c]) * inv_std[c];
                normalized[i] = xh;
                out[i] = gamma[c] * xh + beta[c];
            }
        }
    }
    let trace = BatchNormTrace { normalized, inv_std, batch_mean: mean, batch_var: var, train };
    Ok((Tensor::new(input.shape().to_vec(), out)?, trace))
}

pub struct BatchNormGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

pub fn batchnorm_backward<T: Real>(
    trace: &BatchNormTrace<T>,
    gamma: &[T],
    grad_out: &Tensor<T>,
) -> Result<BatchNormGrads<T>, NnError> {
    let channels = gamma.len();
    let (n, spatial) = bn_dims(grad_out, channels)?;
    let dy = grad_out.data();
    let xh = &trace.normalized;
    let count = T::of((n * spatial) as f64);
    let mut dgamma = vec![T::zero(); channels];
    let mut dbeta = vec![T::zero(); channels];
    for b in 0..n {
        for c in 0..channels {
            let off = (b * channels + c) * spatial;
            dgamma[c] += dot(&dy[off..off + spatial], &xh[off..off + spatial]);
            dbeta[c] += sum(&dy[off..off + spatial]);
        }
    }
    let mut dx = vec![T::zero(); dy.len()];
    for b in 0..n {
        for c in 0..channels {
            let off = (b * channels + c) * spatial;
            let scale = gamma[c] * trace.inv_std[c];
            for i in off..off + spatial {
                dx[i] = if trace.train {
                    // d/dx of (x - mean(x)) / std(x), with dgamma = sum(dy*xh), dbeta = sum(dy)
                    scale * (dy[i] - dbeta[c] / count - xh[i] * dgamma[c] / count)
                } else {
                    scale * dy[i]
                };
            }
        }
    }
    Ok(BatchNormGrads { input: Tensor::new(grad_out.shape().to_vec(), dx)?, gamma: dgamma, beta: dbeta })
}

/// Inverted dropout: survivors are scaled by `1/(1-p)` at training time so
/// inference is the identity. Returns the per-element multiplier as the mask.
pub fn dropout_forward<T: Real, R: rand::Rng + ?Sized>(
    input: &Tensor<T>,
    probability: f64,
    train: bool,
    rng: &mut R,
) -> Result<(Tensor<T>, Option<Vec<T>>), NnError> {
    if !(0.0..1.0).contains(&probability) {
        return Err(NnError::Config(format!("dropout probability {probability} outside [0,1)")));
    }
    if !train || probability == 0.0 {
        return Ok((input.clone_values(), None));
    }
    let keep = T::of(1.0 / (1.0 - probability));
    let mask: Vec<T> = (0..input.numel())
        .map(|_| if rng.random::<f64>() < probability { T::zero() } else { keep })
        .collect();
    let data = input.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Ok((Tensor::new(input.shape().to_vec(), data)?, Some(mask)))
}

pub fn dropout_backward<T: Real>(mask: Option<&[T]>, grad_out: &Tensor<T>) -> Tensor<T> {
    match mask {
        None => grad_out.clone_values(),
        Some(m) => {
            let data = grad_out.data().iter().zip(m).map(|(&g, &k)| g * k).collect();
            Tensor::new(grad_out.shape().to_vec(), data).expect("same shape")
        }
    }
}

fn fc_rows<T: Real>(input: &Tensor<T>, in_features: usize) -> Result<usize, NnError> {
    let per_row = if input.rank() <= 1 {
        input.numel()
    } else {
        input.shape()[1..].iter().product()
    };
    if per_row != in_features {
        return Err(NnError::Shape(format!(
            "fully connected layer expects {in_features} features, got {per_row} (input {:?})",
            input.shape()
        )));
    }
    Ok(if input.rank() <= 1 { 1 } else { input.shape()[0] })
}

/// Affine map `y = W x + b` with `W` stored `out x in`. A 1-D input yields a
/// 1-D output; any higher-rank input is flattened per leading batch index.
pub fn fully_connected_forward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    let [out_f, in_f] = *weights.shape() else {
        return Err(NnError::Shape(format!("FC weights must be OxF, got {:?}", weights.shape())));
    };
    if bias.numel() != out_f {
        return Err(NnError::Shape(format!("bias length {} != {out_f}", bias.numel())));
    }
    let rows = fc_rows(input, in_f)?;
    let x = input.data();
    let w = weights.data();
    let mut out = Vec::with_capacity(rows * out_f);
    for r in 0..rows {
        let xr = &x[r * in_f..][..in_f];
        for o in 0..out_f {
            out.push(dot(&w[o * in_f..][..in_f], xr) + bias.data()[o]);
        }
    }
    let shape = if input.rank() <= 1 { vec![out_f] } else { vec![rows, out_f] };
    Tensor::new(shape, out)
}

pub struct FcGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn fully_connected_backward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<FcGrads<T>, NnError> {
    let [out_f, in_f] = *weights.shape() else {
        return Err(NnError::Shape("FC weights must be rank 2".into()));
    };
    let rows = fc_rows(input, in_f)?;
    if grad_out.numel() != rows * out_f {
        return Err(NnError::Shape("FC output gradient has wrong size".into()));
    }
    let x = input.data();
    let w = weights.data();
    let gy = grad_out.data();
    let mut gx = vec![T::zero(); x.len()];
    let mut gw = vec![T::zero(); w.len()];
    let mut gb = vec![T::zero(); out_f];
    for r in 0..rows {
        let xr = &x[r * in_f..][..in_f];
        let gxr = &mut gx[r * in_f..][..in_f];
        for o in 0..out_f {
            let g = gy[r * out_f + o];
            gb[o] += g;
            axpy(g, xr, &mut gw[o * in_f..][..in_f]);
            axpy(g, &w[o * in_f..][..in_f], gxr);
        }
    }
    Ok(FcGrads {
        input: Tensor::new(input.shape().to_vec(), gx)?,
        weights: Tensor::new(weights.shape().to_vec(), gw)?,
        bias: Tensor::new(vec![out_f], gb)?,
    })
}
