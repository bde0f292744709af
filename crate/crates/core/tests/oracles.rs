mod support;

use clutter::nn::{maxpool_forward, Tensor};
use support::oracles::{oracle_max_error, TOL};

#[test]
fn forwards_match_nested_loops() {
    for seed in [1, 2, 3] {
        let err = oracle_max_error(seed);
        assert!(err <= TOL, "seed {seed}: max deviation {err:e}");
    }
}

#[test]
fn pool_tie_picks_first() {
    let x = Tensor::new(vec![1, 1, 2, 2], vec![1.0f64, 1.0, 1.0, 1.0]).unwrap();
    let p = maxpool_forward(&x, 2, 2).unwrap();
    assert_eq!(p.argmax, vec![0]);
}
