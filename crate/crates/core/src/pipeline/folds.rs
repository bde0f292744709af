use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClusterAssignment, PipelineError};

pub const VALIDATION_FRACTION: f64 = 0.2;
/// Test fractions outside this band draw a warning.
pub const ADVISORY_TEST_FRACTION: (f64, f64) = (0.1, 0.3);

/// One fold; indices refer to the clustered record list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub fold: usize,
    pub test: Vec<usize>,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub seed: u64,
    pub test_fraction: f64,
}

impl FoldPlan {
    pub fn test_fraction_in_advisory_band(&self) -> bool {
        (ADVISORY_TEST_FRACTION.0..=ADVISORY_TEST_FRACTION.1).contains(&self.test_fraction)
    }
}

/// Fold `i` tests on cluster `i`; the rest is shuffled with a seed derived
/// from `seed` and split 80/20 into train and validation.
pub fn make_folds(assignment: &ClusterAssignment, seed: u64) -> Result<Vec<FoldPlan>, PipelineError> {
    let total = assignment.labels.len();
    let mut plans = Vec::with_capacity(assignment.k);
    for fold in 0..assignment.k {
        let test = assignment.members(fold);
        if test.len() == total {
            return Err(PipelineError::Config(format!("cluster {fold} holds the whole dataset")));
        }
        let mut pool: Vec<usize> = (0..total).filter(|&i| assignment.labels[i] != fold).collect();
        let fold_seed = super::derive_seed(seed, "fold-split", fold as u64);
        pool.shuffle(&mut ChaCha8Rng::seed_from_u64(fold_seed));
        let n_val = (pool.len() as f64 * VALIDATION_FRACTION).round() as usize;
        let validation = pool.split_off(pool.len() - n_val);
        let test_fraction = test.len() as f64 / total as f64;
        let plan = FoldPlan { fold, test, train: pool, validation, seed: fold_seed, test_fraction };
        if !plan.test_fraction_in_advisory_band() {
            log::warn!(
                "fold {fold}: test fraction {test_fraction:.3} outside [{}, {}]",
                ADVISORY_TEST_FRACTION.0,
                ADVISORY_TEST_FRACTION.1
            );
        }
        plans.push(plan);
    }
    Ok(plans)
}
