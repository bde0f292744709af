//! Output activations and the fused, logit-based losses.

use serde::{Deserialize, Serialize};

use super::{NnError, Real, Tensor};

/// Output activation of a network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Head {
    Softmax { classes: usize },
    /// One logit; its probability belongs to class 0, the complement to class 1.
    Sigmoid,
}

impl Head {
    pub fn num_classes(self) -> usize {
        match self {
            Head::Softmax { classes } => classes,
            Head::Sigmoid => 2,
        }
    }

    pub fn num_logits(self) -> usize {
        match self {
            Head::Softmax { classes } => classes,
            Head::Sigmoid => 1,
        }
    }

    /// Class probabilities for one sample's logits.
    pub fn probabilities<T: Real>(self, logits: &[T]) -> Vec<T> {
        match self {
            Head::Softmax { .. } => softmax(logits),
            Head::Sigmoid => {
                let p = sigmoid(logits[0]);
                vec![p, T::one() - p]
            }
        }
    }
}

/// Softmax with max subtraction.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - m).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn log_sum_exp<T: Real>(logits: &[T]) -> T {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    m + logits.iter().map(|&z| (z - m).exp()).sum::<T>().ln()
}

/// `-ln p[target]` for an already normalized distribution.
pub fn cross_entropy<T: Real>(probabilities: &[T], target: usize) -> T {
    -probabilities[target].ln()
}

pub fn cross_entropy_with_logits<T: Real>(logits: &[T], target: usize) -> T {
    log_sum_exp(logits) - logits[target]
}

pub fn binary_cross_entropy<T: Real>(probability: T, bit: bool) -> T {
    if bit {
        -probability.ln()
    } else {
        -(T::one() - probability).ln()
    }
}

/// `max(z,0) - z*y + ln(1 + e^-|z|)`
pub fn binary_cross_entropy_with_logits<T: Real>(logit: T, bit: bool) -> T {
    let y = if bit { T::one() } else { T::zero() };
    logit.max(T::zero()) - logit * y + (-logit.abs()).exp().ln_1p()
}

/// Mean loss over a batch of logits (`N x num_logits`) and its gradient with
/// respect to the logits. Targets are class indices; for a sigmoid head index
/// 0 is the positive bit.
pub fn head_loss<T: Real>(
    head: Head,
    logits: &Tensor<T>,
    targets: &[usize],
) -> Result<(T, Tensor<T>), NnError> {
    let width = head.num_logits();
    let n = targets.len();
    if logits.numel() != n * width {
        return Err(NnError::Shape(format!(
            "{} logits for {n} targets of width {width}",
            logits.numel()
        )));
    }
    let scale = T::one() / T::of(n as f64);
    let mut total = T::zero();
    let mut grad = vec![T::zero(); n * width];
    for (i, &t) in targets.iter().enumerate() {
        if t >= head.num_classes() {
            return Err(NnError::Target(format!("class index {t} for head {head:?}")));
        }
        let z = &logits.data()[i * width..][..width];
        let g = &mut grad[i * width..][..width];
        match head {
            Head::Softmax { .. } => {
                total += cross_entropy_with_logits(z, t);
                for (gj, pj) in g.iter_mut().zip(softmax(z)) {
                    *gj = pj * scale;
                }
                g[t] -= scale;
            }
            Head::Sigmoid => {
                let bit = t == 0;
                total += binary_cross_entropy_with_logits(z[0], bit);
                let y = if bit { T::one() } else { T::zero() };
                g[0] = (sigmoid(z[0]) - y) * scale;
            }
        }
    }
    Ok((total * scale, Tensor::new(logits.shape().to_vec(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_symmetry_and_stability() {
        let p = softmax(&[0.0f64, 0.0, 0.0]);
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax(&[1000.0f64, 0.0]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1] >= 0.0 && p[1] < 1e-300);
        assert_eq!(sigmoid(0.0f64), 0.5);
    }

    #[test]
    fn loss_values() {
        assert!((cross_entropy(&[1.0f64 / 3.0; 3], 1) - 3f64.ln()).abs() < 1e-12);
        assert!((cross_entropy_with_logits(&[0.0f64; 3], 2) - 3f64.ln()).abs() < 1e-12);
        assert!(cross_entropy_with_logits(&[50.0f64, -50.0, -50.0], 0) < 1e-20);
        assert!(cross_entropy(&[1.0f64, 0.0], 0).abs() < 1e-15);
        assert!((binary_cross_entropy(0.5f64, true) - 2f64.ln()).abs() < 1e-15);
        assert!((binary_cross_entropy_with_logits(0.0f64, false) - 2f64.ln()).abs() < 1e-15);
        assert!(binary_cross_entropy_with_logits(800.0f64, true).abs() < 1e-300);
        assert!((binary_cross_entropy_with_logits(-800.0f64, true) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn head_loss_gradient_matches_probabilities() {
        let logits = Tensor::new(vec![2, 3], vec![0.1f64, 0.3, -0.2, 2.0, 1.0, 0.0]).unwrap();
        let (_, g) = head_loss(Head::Softmax { classes: 3 }, &logits, &[1, 0]).unwrap();
        let p0 = softmax(&logits.data()[..3]);
        assert!((g.data()[1] - (p0[1] - 1.0) / 2.0).abs() < 1e-15);
        assert!((g.data()[0] - p0[0] / 2.0).abs() < 1e-15);
        assert!(head_loss(Head::Sigmoid, &logits, &[0, 1]).is_err());
        assert!(head_loss(Head::Softmax { classes: 3 }, &logits, &[3, 0]).is_err());
    }
}
