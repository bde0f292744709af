mod support;

use std::collections::{BTreeMap, HashMap};

use clutter::geo::{clean, CleanConfig, DetectionBox, GeoPoint, Inventory, InventoryRecord, ManifestEntry, SampleManifest, SampleStatus};
use clutter::net::D4;
use clutter::pipeline::{ensemble_vote, Vote};
use clutter::stats::{compose_tpr, compose_with_sd, f1_scores, goodman_product_sd};
use clutter::ClutterLabel;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::fixtures::shuffled;

fn label_strategy() -> impl Strategy<Value = ClutterLabel> {
    (0..5usize).prop_map(|i| ClutterLabel::ALL[i])
}

proptest! {
    #[test]
    fn compose_is_product_in_unit_interval(tprs in prop::collection::vec(0.0f64..=1.0, 1..5)) {
        let p = compose_tpr(&tprs);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(p <= tprs.iter().copied().fold(1.0, f64::min) + 1e-15);
    }

    #[test]
    fn goodman_is_symmetric_and_dominates(m1 in 0.0f64..1.0, s1 in 0.0f64..0.2, m2 in 0.0f64..1.0, s2 in 0.0f64..0.2) {
        let sd = goodman_product_sd(m1, s1, m2, s2);
        prop_assert!((sd - goodman_product_sd(m2, s2, m1, s1)).abs() < 1e-15);
        prop_assert!(sd + 1e-15 >= s1 * m2);
        prop_assert!(sd + 1e-15 >= s2 * m1);
        prop_assert_eq!(goodman_product_sd(m1, 0.0, m2, 0.0), 0.0);
    }

    #[test]
    fn composed_sd_equals_pairwise(m1 in 0.5f64..1.0, s1 in 0.0f64..0.1, m2 in 0.5f64..1.0, s2 in 0.0f64..0.1) {
        let (m, s) = compose_with_sd(&[(m1, s1), (m2, s2)]);
        prop_assert_eq!(m, m1 * m2);
        prop_assert_eq!(s, goodman_product_sd(m1, s1, m2, s2));
    }

    #[test]
    fn micro_f1_equals_accuracy(pairs in prop::collection::vec((label_strategy(), label_strategy()), 1..200)) {
        let (pred, truth): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let f1 = f1_scores(&pred, &truth, &ClutterLabel::ALL).unwrap();
        let acc = pred.iter().zip(&truth).filter(|(p, t)| p == t).count() as f64 / pred.len() as f64;
        prop_assert!((f1.micro - acc).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&f1.macro_));
    }

    #[test]
    fn cleaning_ignores_record_order(seed in any::<u64>()) {
        let (inventory, manifest, detections) = random_cleaning_fixture(seed);
        let cfg = CleanConfig::default();
        let base = outcome_map(&clean(&inventory, &manifest, &detections, &cfg).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let inv2 = Inventory::new(shuffled(inventory.records(), &mut rng)).unwrap();
        let man2 = SampleManifest::new(shuffled(&manifest.entries, &mut rng));
        let again = outcome_map(&clean(&inv2, &man2, &detections, &cfg).unwrap());
        prop_assert_eq!(base, again);
    }
}

fn outcome_map(m: &SampleManifest) -> BTreeMap<String, Option<String>> {
    m.entries.iter().map(|e| (e.id.clone(), e.reason.clone())).collect()
}

fn random_cleaning_fixture(seed: u64) -> (Inventory, SampleManifest, HashMap<String, Vec<DetectionBox>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..40);
    let mut records = Vec::new();
    let mut entries = Vec::new();
    let mut detections = HashMap::new();
    for i in 0..n {
        let id = format!("r{i}");
        let label = ClutterLabel::ALL[rng.random_range(0..5)];
        // ~1 m per 1e-5 degrees, so the 2 m radius catches some neighbours
        let point = GeoPoint::new(45.0 + rng.random_range(0.0..2e-4), -75.0 + rng.random_range(0.0..2e-4)).unwrap();
        records.push(InventoryRecord::new(id.clone(), point, label, "fixture"));
        entries.push(ManifestEntry {
            id: id.clone(),
            image_path: None,
            byte_size: Some(rng.random_range(150_000..250_000)),
            fetched_at: None,
            status: SampleStatus::Kept,
            reason: None,
        });
        if rng.random_bool(0.5) {
            let x = rng.random_range(0.0..600.0);
            let y = rng.random_range(0.0..600.0);
            let b = DetectionBox { image_id: id.clone(), xmin: x, ymin: y, xmax: x + 30.0, ymax: y + 30.0, score: rng.random() };
            detections.insert(id, vec![b]);
        }
    }
    (Inventory::new(records).unwrap(), SampleManifest::new(entries), detections)
}

#[test]
fn vote_fixtures_majority_and_permutation() {
    support::checks::votes(1000, 8).unwrap();
    assert_eq!(ensemble_vote::<ClutterLabel>(&[], &ClutterLabel::ALL), None);
}

#[test]
fn d4_group_on_generic_images() {
    support::checks::d4(12).unwrap();
    let rot = D4::ALL[1];
    assert_eq!(rot.compose(rot).compose(rot).compose(rot), D4::IDENTITY);
    assert_eq!(D4::ALL.iter().map(|d| d.index()).collect::<Vec<_>>(), (0..8).collect::<Vec<_>>());
}

#[test]
fn tie_between_labels_uses_mean_probability_then_order() {
    let v = |label, probability| Vote { label, probability };
    let votes = [v(ClutterLabel::Other, 0.9), v(ClutterLabel::Deciduous, 0.6)];
    assert_eq!(ensemble_vote(&votes, &ClutterLabel::ALL), Some(ClutterLabel::Other));
    let votes = [v(ClutterLabel::Other, 0.6), v(ClutterLabel::Coniferous, 0.6)];
    assert_eq!(ensemble_vote(&votes, &ClutterLabel::ALL), Some(ClutterLabel::Coniferous));
}
