//! Evaluation mathematics: per-class rates, fold aggregation, composition of
//! stage accuracies with their exact product variance, the one-sided
//! McNemar test, F1 scores, and the result tables.

mod f1;
mod mcnemar;
pub mod report;
mod tpr;

pub use f1::{f1_scores, F1Scores};
pub use mcnemar::{
    build_contingency, chi_squared1_upper_tail, mcnemar_one_sided, ContingencyTable, Direction,
    PairedOutcome, TestResult,
};
pub use report::{render_report, Report};
pub use tpr::{compose_tpr, compose_with_sd, goodman_product_sd, per_class_tpr, rate_where, weighted_fold_mean, ClassRate};

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("empty input")]
    Empty,
    #[error("misaligned inputs: {0} vs {1}")]
    Misaligned(usize, usize),
    #[error("{0}")]
    Invalid(String),
}
