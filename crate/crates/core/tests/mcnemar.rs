mod support;

use clutter::stats::{mcnemar_one_sided, ContingencyTable, Direction};
use proptest::prelude::*;
use support::stats::{binomial_upper_tail, chi2_tail_by_quadrature};

fn table(b: u64, c: u64) -> ContingencyTable {
    ContingencyTable { n_bothcorrect: 7, n_2only: b, n_1only: c, n_bothwrong: 3 }
}

#[test]
fn corrected_p_and_tail_oracles() {
    support::checks::mcnemar().unwrap();
}

#[test]
fn quadrature_oracle_known_values() {
    // 3.841458820694124 is the 95% quantile
    assert!((chi2_tail_by_quadrature(3.841458820694124) - 0.05).abs() < 1e-12);
    assert!((chi2_tail_by_quadrature(1.0) - 0.31731050786291415).abs() < 1e-12);
}

proptest! {
    #[test]
    fn swapping_methods_swaps_direction(b in 0u64..200, c in 0u64..200) {
        let p = mcnemar_one_sided(&table(b, c), Direction::Greater).p_value;
        let q = mcnemar_one_sided(&table(c, b), Direction::Less).p_value;
        prop_assert!((p - q).abs() < 1e-15);
    }

    #[test]
    fn stronger_evidence_lowers_p(b in 1u64..100, c in 0u64..100) {
        let p = mcnemar_one_sided(&table(b, c), Direction::Greater).p_value;
        let q = mcnemar_one_sided(&table(b + 1, c), Direction::Greater).p_value;
        prop_assert!(q <= p + 1e-15);
    }
}

#[test]
fn binomial_oracle_known_values() {
    assert_eq!(binomial_upper_tail(0, 10), 1.0);
    assert!((binomial_upper_tail(10, 10) - 1.0 / 1024.0).abs() < 1e-18);
    assert!((binomial_upper_tail(8, 10) - 56.0 / 1024.0).abs() < 1e-18);
}
