use serde::{Deserialize, Serialize};

use super::StatsError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Scores<L> {
    pub micro: f64,
    pub macro_: f64,
    pub per_class: Vec<(L, f64)>,
    /// Classes never predicted and never true; they count as F1 = 0.
    pub degenerate: Vec<L>,
}

/// Micro- and macro-averaged F1 over `classes`.
pub fn f1_scores<L: Copy + PartialEq + std::fmt::Debug>(
    predictions: &[L],
    truths: &[L],
    classes: &[L],
) -> Result<F1Scores<L>, StatsError> {
    if predictions.is_empty() {
        return Err(StatsError::Empty);
    }
    if predictions.len() != truths.len() {
        return Err(StatsError::Misaligned(predictions.len(), truths.len()));
    }
    let (mut tp_all, mut fp_all, mut fn_all) = (0usize, 0usize, 0usize);
    let mut per_class = Vec::with_capacity(classes.len());
    let mut degenerate = Vec::new();
    for &c in classes {
        let mut tp = 0;
        let mut fp = 0;
        let mut fneg = 0;
        for (&p, &t) in predictions.iter().zip(truths) {
            match (p == c, t == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                _ => {}
            }
        }
        tp_all += tp;
        fp_all += fp;
        fn_all += fneg;
        let denom = 2 * tp + fp + fneg;
        let f1 = if denom == 0 {
            log::warn!("class {c:?} neither predicted nor present; its F1 counts as 0");
            degenerate.push(c);
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        };
        per_class.push((c, f1));
    }
    let denom = 2 * tp_all + fp_all + fn_all;
    let micro = if denom == 0 { 0.0 } else { 2.0 * tp_all as f64 / denom as f64 };
    let macro_ = per_class.iter().map(|(_, f)| f).sum::<f64>() / classes.len().max(1) as f64;
    Ok(F1Scores { micro, macro_, per_class, degenerate })
}
