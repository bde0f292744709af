//! Criterion checks shared by the core tests and the acceptance runner.
//! Each returns a short detail string, or what went wrong.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use clutter::net::gradsuite::gradient_suite;
use clutter::net::{augment_d4, Checkpoint, D4};
use clutter::pipeline::{ensemble_vote, plan_folds, CvConfig, Vote};
use clutter::stats::{chi_squared1_upper_tail, compose_tpr, goodman_product_sd, mcnemar_one_sided, ContingencyTable, Direction};
use clutter::ClutterLabel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::fixtures::{city_points, random_checkpoint, random_image, random_votes, shuffled};
use super::oracles::{oracle_max_error, TOL};
use super::stats::{binomial_upper_tail, chi2_tail_by_quadrature, log_grid, ACCURACY_TOL, SD_TOL, STAGE_RESULTS, TWO_STAGE_TARGETS};

pub type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn two_stage_rows() -> Check {
    let mut worst = (0.0f64, 0.0f64);
    for ((class, (m1, s1), (m2, s2)), (want_m, want_sd)) in STAGE_RESULTS.iter().zip(TWO_STAGE_TARGETS) {
        let m = compose_tpr(&[*m1, *m2]);
        let sd = goodman_product_sd(*m1, *s1, *m2, *s2);
        ensure((m - want_m).abs() <= ACCURACY_TOL, || format!("{class}: accuracy {m:.4} vs {want_m}"))?;
        ensure((sd - want_sd).abs() <= SD_TOL, || format!("{class}: sd {sd:.5} vs {want_sd}"))?;
        worst = (worst.0.max((m - want_m).abs()), worst.1.max((sd - want_sd).abs()));
    }
    Ok(format!("max deviation accuracy {:.1e}, sd {:.1e}", worst.0, worst.1))
}

pub fn gradients(seed: u64) -> Check {
    let results = gradient_suite(seed).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut random = 0;
    for r in &results {
        ensure(r.checked > 0, || format!("{}: nothing checked", r.case))?;
        ensure(r.max_rel_error <= 1e-4, || format!("{}: relative error {:e}", r.case, r.max_rel_error))?;
        worst = worst.max(r.max_rel_error);
        random += usize::from(r.case.starts_with("random"));
    }
    ensure(random >= 20, || format!("only {random} randomized cases"))?;
    ensure(results.len() > random, || "no full-architecture case".into())?;
    Ok(format!("{} cases ({random} randomized), max relative error {worst:.2e}", results.len()))
}

pub fn oracles() -> Check {
    let worst = (1..=3).map(oracle_max_error).fold(0.0, f64::max);
    ensure(worst <= TOL, || format!("max deviation {worst:e}"))?;
    Ok(format!("max abs deviation {worst:.1e}"))
}

fn table(b: u64, c: u64) -> ContingencyTable {
    ContingencyTable { n_bothcorrect: 7, n_2only: b, n_1only: c, n_bothwrong: 3 }
}

pub fn mcnemar() -> Check {
    let mut worst_binom = 0.0f64;
    for n in 1..=30u64 {
        for b in 0..=n {
            let c = n - b;
            for (dir, k) in [(Direction::Greater, b), (Direction::Less, c)] {
                let p = mcnemar_one_sided(&table(b, c), dir).p_value;
                ensure((0.0..=1.0).contains(&p), || format!("b={b} c={c}: p {p} outside [0, 1]"))?;
                if n >= 10 {
                    let exact = binomial_upper_tail(k, n);
                    ensure((p - exact).abs() <= 0.05, || format!("b={b} c={c} {dir:?}: {p} vs exact {exact}"))?;
                    worst_binom = worst_binom.max((p - exact).abs());
                }
            }
        }
    }
    let mut worst_rel = 0.0f64;
    let mut smallest = 1.0f64;
    for x in log_grid(1e-4, 95.0, 400) {
        let got = chi_squared1_upper_tail(x);
        let want = chi2_tail_by_quadrature(x);
        let rel = ((got - want) / want).abs();
        ensure(rel <= 1e-6, || format!("x={x}: tail {got:e} vs quadrature {want:e}"))?;
        worst_rel = worst_rel.max(rel);
        smallest = smallest.min(want);
    }
    ensure(smallest <= 1e-21, || format!("grid only reaches p = {smallest:e}"))?;
    Ok(format!("binomial gap {worst_binom:.4}, tail relative error {worst_rel:.1e} down to p = {smallest:.1e}"))
}

pub fn city_folds(seed: u64) -> Check {
    let points = city_points(seed);
    ensure(points.len() == 1000, || format!("{} records", points.len()))?;
    let config = CvConfig { seed, ..Default::default() };
    let (assignment, plans) = plan_folds(&points, &config).map_err(|e| e.to_string())?;
    ensure(plans.len() == 5, || format!("{} folds", plans.len()))?;
    let mut tested = BTreeSet::new();
    let mut fractions = Vec::new();
    for plan in &plans {
        let members: BTreeSet<usize> = assignment.members(plan.fold).into_iter().collect();
        let test: BTreeSet<usize> = plan.test.iter().copied().collect();
        ensure(test == members, || format!("fold {}: test set is not its cluster", plan.fold))?;
        let all: BTreeSet<usize> = plan.test.iter().chain(&plan.train).chain(&plan.validation).copied().collect();
        let sizes = plan.test.len() + plan.train.len() + plan.validation.len();
        ensure(all.len() == 1000 && sizes == 1000, || format!("fold {}: not a partition", plan.fold))?;
        let expected = (1000 - plan.test.len()) as f64 * 0.2;
        ensure((plan.validation.len() as f64 - expected).abs() <= 1.0, || {
            format!("fold {}: validation {} vs {expected}", plan.fold, plan.validation.len())
        })?;
        ensure(plan.test_fraction_in_advisory_band(), || format!("fold {}: test fraction {}", plan.fold, plan.test_fraction))?;
        tested.extend(test);
        fractions.push(format!("{:.3}", plan.test_fraction));
    }
    ensure(tested.len() == 1000, || "test sets do not cover every record".into())?;
    Ok(format!("test fractions [{}]", fractions.join(", ")))
}

fn counts(votes: &[Vote<ClutterLabel>]) -> BTreeMap<ClutterLabel, usize> {
    let mut m = BTreeMap::new();
    for v in votes {
        *m.entry(v.label).or_insert(0) += 1;
    }
    m
}

pub fn votes(fixtures: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut majorities = 0;
    for i in 0..fixtures {
        let votes = random_votes(&mut rng);
        let winner = ensemble_vote(&votes, &ClutterLabel::ALL).ok_or("no winner")?;
        let c = counts(&votes);
        let top = *c.values().max().unwrap();
        ensure(c[&winner] == top, || format!("fixture {i}: {winner} is not modal"))?;
        if let Some((&label, _)) = c.iter().find(|(_, &n)| 2 * n > votes.len()) {
            ensure(winner == label, || format!("fixture {i}: majority {label} lost to {winner}"))?;
            majorities += 1;
        }
        for _ in 0..3 {
            let again = ensemble_vote(&shuffled(&votes, &mut rng), &ClutterLabel::ALL);
            ensure(again == Some(winner), || format!("fixture {i}: permutation changed the winner"))?;
        }
    }
    Ok(format!("{fixtures} fixtures, {majorities} with a strict majority"))
}

pub fn d4(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for side in [2, 5, 16] {
        let img = random_image(&mut rng, side);
        let views = augment_d4(&img).map_err(|e| e.to_string())?;
        let distinct: BTreeSet<&[u8]> = views.iter().map(|v| v.data()).collect();
        ensure(views.len() == 8 && distinct.len() == 8, || format!("side {side}: {} distinct views", distinct.len()))?;
        for a in D4::ALL {
            ensure(a.compose(a.inverse()) == D4::IDENTITY, || format!("{a:?} inverse"))?;
            for b in D4::ALL {
                let composed = a.compose(b).apply(&img).map_err(|e| e.to_string())?;
                let sequential = a.apply(&b.apply(&img).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
                ensure(composed == sequential, || format!("side {side}: {a:?} after {b:?}"))?;
                for c in D4::ALL {
                    ensure(a.compose(b).compose(c) == a.compose(b.compose(c)), || "composition not associative".into())?;
                }
            }
        }
    }
    Ok("8 distinct views; composition, inverse and associativity hold".into())
}

pub fn checkpoint_round_trip(count: u64, dir: &Path) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..count {
        let ckpt = random_checkpoint(1000 + i);
        let path = dir.join(format!("c{i}.cltr"));
        ckpt.save(&path).map_err(|e| e.to_string())?;
        let loaded = Checkpoint::load(&path).map_err(|e| e.to_string())?;
        ensure(loaded.kind() == ckpt.kind() && loaded.config() == ckpt.config(), || format!("checkpoint {i}: header differs"))?;
        ensure(loaded.metadata == ckpt.metadata, || format!("checkpoint {i}: metadata differs"))?;
        let img = random_image(&mut rng, ckpt.config().input_side);
        let bits = |c: &Checkpoint| -> Result<Vec<u32>, String> {
            Ok(c.predict_image(&img).map_err(|e| e.to_string())?.iter().map(|v| v.to_bits()).collect())
        };
        ensure(bits(&ckpt)? == bits(&loaded)?, || format!("checkpoint {i}: predictions differ"))?;
        ensure(loaded.to_bytes() == ckpt.to_bytes(), || format!("checkpoint {i}: bytes differ"))?;
    }
    Ok(format!("{count} checkpoints bit-identical"))
}
