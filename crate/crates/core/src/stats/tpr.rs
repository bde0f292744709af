use serde::{Deserialize, Serialize};

use super::StatsError;

/// True-positive rate of one class with its support.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRate {
    pub tpr: f64,
    pub n: usize,
}

/// Fraction of samples whose truth is `class` that were predicted as
/// `class`. `None` when the class does not occur in `truths`.
pub fn per_class_tpr<L: PartialEq + Copy>(
    predictions: &[L],
    truths: &[L],
    class: L,
) -> Result<Option<ClassRate>, StatsError> {
    if predictions.len() != truths.len() {
        return Err(StatsError::Misaligned(predictions.len(), truths.len()));
    }
    let mut n = 0;
    let mut hit = 0;
    for (p, t) in predictions.iter().zip(truths) {
        if *t == class {
            n += 1;
            if *p == class {
                hit += 1;
            }
        }
    }
    Ok((n > 0).then(|| ClassRate { tpr: hit as f64 / n as f64, n }))
}

/// TPR where "correct" is an arbitrary predicate, e.g. a fine class counted
/// as correct at stage 1 when its coarse class was predicted.
pub fn rate_where<T>(items: &[T], mut relevant: impl FnMut(&T) -> bool, mut correct: impl FnMut(&T) -> bool) -> Option<ClassRate> {
    let mut n = 0;
    let mut hit = 0;
    for it in items {
        if relevant(it) {
            n += 1;
            if correct(it) {
                hit += 1;
            }
        }
    }
    (n > 0).then(|| ClassRate { tpr: hit as f64 / n as f64, n })
}

/// Weighted mean and weighted population standard deviation.
pub fn weighted_fold_mean(values: &[f64], weights: &[f64]) -> Result<(f64, f64), StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    if values.len() != weights.len() {
        return Err(StatsError::Misaligned(values.len(), weights.len()));
    }
    if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(StatsError::Invalid("fold weights must be positive".into()));
    }
    let total: f64 = weights.iter().sum();
    let mean = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total;
    let var = values.iter().zip(weights).map(|(v, w)| w * (v - mean).powi(2)).sum::<f64>() / total;
    Ok((mean, var.max(0.0).sqrt()))
}

/// Accuracy of a multi-stage classifier assuming independent stages: the
/// product of the per-stage true-positive rates.
pub fn compose_tpr(stage_tprs: &[f64]) -> f64 {
    stage_tprs.iter().product()
}

/// Exact standard deviation of the product of two independent random
/// variables with means `m1, m2` and standard deviations `s1, s2`:
/// `sqrt(s1^2 s2^2 + s1^2 m2^2 + s2^2 m1^2)`.
pub fn goodman_product_sd(m1: f64, s1: f64, m2: f64, s2: f64) -> f64 {
    let (v1, v2) = (s1 * s1, s2 * s2);
    (v1 * v2 + v1 * m2 * m2 + v2 * m1 * m1).sqrt()
}

/// Mean and SD of a product of any number of independent factors given as
/// `(mean, sd)` pairs, folding the two-factor formula left to right.
pub fn compose_with_sd(stages: &[(f64, f64)]) -> (f64, f64) {
    let mut iter = stages.iter().copied();
    let Some(first) = iter.next() else { return (1.0, 0.0) };
    iter.fold(first, |(m, s), (m2, s2)| (m * m2, goodman_product_sd(m, s, m2, s2)))
}
