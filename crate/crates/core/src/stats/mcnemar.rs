use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::StatsError;

/// Paired outcome counts of two methods on the same samples. Method 2 is the
/// two-stage pipeline, method 1 the single-stage model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub n_bothcorrect: u64,
    /// Two-stage correct, single-stage wrong (`b`).
    pub n_2only: u64,
    /// Single-stage correct, two-stage wrong (`c`).
    pub n_1only: u64,
    pub n_bothwrong: u64,
}

impl ContingencyTable {
    pub fn from_pairs(two_stage: &[bool], single_stage: &[bool]) -> Result<Self, StatsError> {
        if two_stage.len() != single_stage.len() {
            return Err(StatsError::Misaligned(two_stage.len(), single_stage.len()));
        }
        let mut t = Self::default();
        for (&a, &b) in two_stage.iter().zip(single_stage) {
            match (a, b) {
                (true, true) => t.n_bothcorrect += 1,
                (true, false) => t.n_2only += 1,
                (false, true) => t.n_1only += 1,
                (false, false) => t.n_bothwrong += 1,
            }
        }
        Ok(t)
    }

    pub fn total(&self) -> u64 {
        self.n_bothcorrect + self.n_2only + self.n_1only + self.n_bothwrong
    }

    /// Accuracy of the two-stage method, `(n_bothcorrect + n_2only) / total`.
    pub fn two_stage_accuracy(&self) -> Option<f64> {
        let n = self.total();
        (n > 0).then(|| (self.n_bothcorrect + self.n_2only) as f64 / n as f64)
    }

    pub fn single_stage_accuracy(&self) -> Option<f64> {
        let n = self.total();
        (n > 0).then(|| (self.n_bothcorrect + self.n_1only) as f64 / n as f64)
    }
}

/// A per-sample comparison record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedOutcome<L> {
    pub truth: L,
    /// Both stages correct.
    pub two_stage_correct: bool,
    pub single_stage_correct: bool,
}

/// Contingency table over the samples whose truth is `class`.
pub fn build_contingency<L: PartialEq + Copy>(outcomes: &[PairedOutcome<L>], class: L) -> ContingencyTable {
    let (a, b): (Vec<bool>, Vec<bool>) = outcomes
        .iter()
        .filter(|o| o.truth == class)
        .map(|o| (o.two_stage_correct, o.single_stage_correct))
        .unzip();
    ContingencyTable::from_pairs(&a, &b).expect("equal lengths by construction")
}

/// Alternative hypothesis of the one-sided test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// The two-stage method is more accurate.
    Greater,
    /// The two-stage method is less accurate.
    Less,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub direction: Direction,
    /// `b + c = 0`: the methods never disagree, p is 1.
    pub no_disagreement: bool,
}

/// Upper tail probability of a chi-squared variable with one degree of
/// freedom, `P(X > x) = erfc(sqrt(x / 2))`.
pub fn chi_squared1_upper_tail(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    erfc((x / 2.0).sqrt())
}

/// One-sided McNemar test with continuity correction.
///
/// The statistic is `max(|b - c| - 1, 0)^2 / (b + c)`. When the observed
/// disagreement favours `direction`, `p` is half the chi-squared(1) upper
/// tail at the statistic. Otherwise the continuity correction moves the
/// other way and `p = 1 - tail((|b - c| + 1)^2 / (b + c)) / 2`, which keeps
/// `p` close to the exact binomial tail on both sides.
pub fn mcnemar_one_sided(table: &ContingencyTable, direction: Direction) -> TestResult {
    let b = table.n_2only as f64;
    let c = table.n_1only as f64;
    let n = b + c;
    if n == 0.0 {
        return TestResult { statistic: 0.0, p_value: 1.0, direction, no_disagreement: true };
    }
    let diff = (b - c).abs();
    let statistic = (diff - 1.0).max(0.0).powi(2) / n;
    let favours = match direction {
        Direction::Greater => b > c,
        Direction::Less => c > b,
    };
    let p_value = if favours {
        0.5 * chi_squared1_upper_tail(statistic)
    } else {
        1.0 - 0.5 * chi_squared1_upper_tail((diff + 1.0).powi(2) / n)
    };
    TestResult { statistic, p_value, direction, no_disagreement: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contingency_counting() {
        let t = ContingencyTable::from_pairs(&[true; 10], &[true; 10]).unwrap();
        assert_eq!((t.n_bothcorrect, t.n_2only, t.n_1only, t.n_bothwrong), (10, 0, 0, 0));
        let two = [true, true, true, false, true, true, true, true, true, true];
        let one = [false, false, false, true, true, true, true, true, true, true];
        let t = ContingencyTable::from_pairs(&two, &one).unwrap();
        assert_eq!((t.n_bothcorrect, t.n_2only, t.n_1only, t.n_bothwrong), (6, 3, 1, 0));
        assert!(ContingencyTable::from_pairs(&[true], &[]).is_err());
    }

    #[test]
    fn stage_one_miss_counts_as_two_stage_wrong() {
        // truth deciduous, stage 1 said building: the stage-2 tree model would
        // have been right, but the pipeline never reached it
        let o = [PairedOutcome { truth: 0u8, two_stage_correct: false, single_stage_correct: true }];
        let t = build_contingency(&o, 0);
        assert_eq!(t.n_1only, 1);
        assert_eq!(build_contingency(&o, 1).total(), 0);
    }

    #[test]
    fn reference_case() {
        let t = ContingencyTable { n_2only: 10, n_1only: 2, ..Default::default() };
        let r = mcnemar_one_sided(&t, Direction::Greater);
        assert!((r.statistic - 49.0 / 12.0).abs() < 1e-12);
        assert!((r.p_value - 0.0217).abs() < 1e-3, "{}", r.p_value);
        let rev = mcnemar_one_sided(&t, Direction::Less);
        assert!(rev.p_value > 0.9);
    }

    #[test]
    fn no_disagreement() {
        let t = ContingencyTable { n_bothcorrect: 5, ..Default::default() };
        let r = mcnemar_one_sided(&t, Direction::Greater);
        assert!(r.no_disagreement);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn tied_disagreements() {
        for b in 1..40u64 {
            let t = ContingencyTable { n_2only: b, n_1only: b, ..Default::default() };
            for d in [Direction::Greater, Direction::Less] {
                let r = mcnemar_one_sided(&t, d);
                assert!(r.statistic <= 1.0 / (2.0 * b as f64) + 1e-15);
                assert!(r.p_value >= 0.38, "b={b} p={}", r.p_value);
            }
        }
    }

    #[test]
    fn swap_invariance_of_statistic() {
        for b in 0..15u64 {
            for c in 0..15u64 {
                let t1 = ContingencyTable { n_2only: b, n_1only: c, ..Default::default() };
                let t2 = ContingencyTable { n_2only: c, n_1only: b, ..Default::default() };
                let r1 = mcnemar_one_sided(&t1, Direction::Greater);
                let r2 = mcnemar_one_sided(&t2, Direction::Less);
                assert_eq!(r1.statistic, mcnemar_one_sided(&t2, Direction::Greater).statistic);
                assert!((r1.p_value - r2.p_value).abs() < 1e-15);
            }
        }
    }
}
