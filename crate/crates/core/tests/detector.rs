mod common;

use std::time::Instant;

use common::{dist, normalize};
use oodbound::boundary::{norm_euclid, BoundaryParams};
use oodbound::data::{synth_blobs, BlobSpec, Dataset, LabeledEmbedding, OOD_LABEL};
use oodbound::detector::{fit, load_model, save_model, DetectorModel, ModelError};
use oodbound::metric::TrainConfig;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn blob_model(classes: usize, dim: usize, epochs: usize) -> (DetectorModel, Dataset) {
    let (train, test) = synth_blobs(&BlobSpec { classes, dim, per_class: 20, sigma: 0.05, seed: 31 }).unwrap();
    let cfg = TrainConfig { epochs, ..Default::default() };
    (fit(&train, &cfg, &BoundaryParams::default()).unwrap(), test)
}

fn probes(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

#[test]
fn radii_stay_inside_half_the_centroid_gap() {
    let (model, test) = blob_model(6, 16, 30);
    let g = model.geometry();
    for (i, a) in g.iter().enumerate() {
        let gap = g.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, b)| norm_euclid(&a.centroid, &b.centroid).unwrap()).fold(f64::INFINITY, f64::min);
        assert!(a.radius < gap / 2.0, "{}: radius {} gap {gap}", a.label, a.radius);
    }
    let preds = model.predict_batch(&test.items().iter().map(|i| i.vector.clone()).collect::<Vec<_>>()).unwrap();
    let correct = preds.iter().zip(test.items()).filter(|(p, item)| p.label == item.label).count();
    assert!(preds.iter().zip(test.items()).all(|(p, item)| p.is_ood() || p.label == item.label));
    assert!(correct as f64 >= 0.95 * preds.len() as f64, "{correct}/{}", preds.len());
}

#[test]
fn minimal_two_class_fit() {
    let items = vec![
        LabeledEmbedding::new("a", vec![1.0, 0.1]),
        LabeledEmbedding::new("a", vec![1.0, -0.1]),
        LabeledEmbedding::new("b", vec![-0.1, 1.0]),
        LabeledEmbedding::new("b", vec![0.1, 1.0]),
    ];
    let train = Dataset::new(items).unwrap();
    let model = fit(&train, &TrainConfig { batch_size: 4, ..Default::default() }, &BoundaryParams::default()).unwrap();
    assert_eq!(model.labels(), vec!["a", "b"]);
    for item in train.items() {
        assert_eq!(model.predict(&item.vector).unwrap().label, item.label);
    }
}

#[test]
fn save_load_round_trip_preserves_predictions() {
    let (model, _) = blob_model(4, 8, 5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&model, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded, model);
    let xs = probes(100, 8, 3);
    assert_eq!(model.predict_batch(&xs).unwrap(), loaded.predict_batch(&xs).unwrap());
    assert_eq!(loaded.to_json_bytes(), std::fs::read(&path).unwrap());
}

#[test]
fn load_rejects_bad_files() {
    let (model, _) = blob_model(3, 8, 2);
    let bytes = model.to_json_bytes();

    let mut future: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    future["version"] = serde_json::json!("oodbound/9");
    let future = serde_json::to_vec(&future).unwrap();
    assert!(matches!(DetectorModel::from_json_bytes(&future), Err(ModelError::Version(v)) if v == "oodbound/9"));

    let truncated = &bytes[..bytes.len() / 2];
    assert!(matches!(DetectorModel::from_json_bytes(truncated), Err(ModelError::Corrupt(_))));

    let mut value: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    value["radii"][0] = serde_json::json!(0.123);
    let tampered = serde_json::to_vec(&value).unwrap();
    assert!(matches!(DetectorModel::from_json_bytes(&tampered), Err(ModelError::Checksum { .. })));
}

#[test]
fn batch_of_1000_on_38_classes_is_fast() {
    let (model, _) = blob_model(38, 32, 1);
    let xs = probes(1000, 32, 8);
    model.predict_batch(&xs).unwrap();
    let start = Instant::now();
    let preds = model.predict_batch(&xs).unwrap();
    let elapsed = start.elapsed();
    assert_eq!(preds.len(), 1000);
    assert!(elapsed.as_millis() < 100, "{elapsed:?}");
}

#[test]
fn dimension_mismatch_names_the_row() {
    let (model, _) = blob_model(3, 8, 1);
    let xs = vec![vec![0.5; 8], vec![0.5; 7]];
    match model.predict_batch(&xs) {
        Err(ModelError::AtIndex { index, .. }) => assert_eq!(index, 1),
        other => panic!("{other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn decisions_follow_nearest_centroid_and_radius(seed in any::<u64>()) {
        let (model, _) = blob_model(4, 8, 2);
        for x in probes(20, 8, seed) {
            let p = model.predict(&x).unwrap();
            let z = normalize(&model.projection().apply(&x).unwrap());
            let dists: Vec<f64> = model.geometry().iter().map(|g| dist(&z, &normalize(&g.centroid))).collect();
            let best = dists.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!((p.distance - best).abs() < 1e-12);
            let nearest = model.geometry().iter().find(|g| g.label == p.nearest_label).unwrap();
            prop_assert!((p.margin - (nearest.radius - p.distance)).abs() < 1e-15);
            if p.margin >= 0.0 {
                prop_assert_eq!(&p.label, &p.nearest_label);
            } else {
                prop_assert_eq!(p.label.as_str(), OOD_LABEL);
            }
        }
    }

    #[test]
    fn positive_scaling_does_not_change_decisions(seed in any::<u64>(), c in 0.01f64..100.0) {
        let (model, _) = blob_model(4, 8, 2);
        for x in probes(20, 8, seed) {
            let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
            let (a, b) = (model.predict(&x).unwrap(), model.predict(&scaled).unwrap());
            prop_assert_eq!(&a.nearest_label, &b.nearest_label);
            prop_assert!((a.distance - b.distance).abs() < 1e-9);
            if a.margin.abs() > 1e-9 {
                prop_assert_eq!(a.label, b.label);
            }
        }
    }

    #[test]
    fn shrinking_a_radius_never_admits_more(seed in any::<u64>(), class in 0usize..4, shrink in 0.0f64..1.0) {
        let (model, _) = blob_model(4, 8, 2);
        let r = model.geometry()[class].radius;
        let smaller = model.with_radius(class, r * shrink).unwrap();
        for x in probes(30, 8, seed) {
            if model.predict(&x).unwrap().is_ood() {
                prop_assert!(smaller.predict(&x).unwrap().is_ood());
            }
        }
    }
}
