mod oracle;

use engage_core::features::{window_features, FeatureConfig, FEATURE_COUNT};
use engage_core::gbdt::{fit, LabeledSet, TrainConfig};
use engage_core::pose::TrackId;
use engage_core::FeatureVector;
use oracle::{brute_force_features, random_window, ExactGbdt, ExactParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn features_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = FeatureConfig::default();
    for _ in 0..200 {
        let frames = random_window(&mut rng, 30);
        let (_, fv) = window_features(&TrackId::new("p1"), 0.0, &frames, &cfg).unwrap();
        let want = brute_force_features(&frames);
        assert_eq!(fv.as_slice().len(), FEATURE_COUNT);
        for (j, (a, b)) in fv.as_slice().iter().zip(&want).enumerate() {
            assert!((a - b).abs() <= 1e-9, "column {j}: {a} vs {b}");
        }
    }
}

/// Rows with a noisy nonlinear label over a few informative columns.
fn random_rows(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..FEATURE_COUNT)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let z = 2.0 * row[0] - row[3]
            + if row[7] > 0.2 { 1.0 } else { -0.5 }
            + rng.random_range(-0.8..0.8);
        y.push(z > 0.0);
        x.push(row);
    }
    (x, y)
}

#[test]
fn boosting_agrees_with_exact_split_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (n, depth, rounds) in [(60, 1, 3), (120, 2, 5), (200, 2, 5), (200, 1, 1)] {
        let (x, y) = random_rows(&mut rng, n);
        let set = LabeledSet::new(
            x.iter()
                .zip(&y)
                .map(|(r, &l)| (FeatureVector::from_slice(r).unwrap(), l))
                .collect(),
        );
        let cfg = TrainConfig {
            max_depth: depth,
            n_iterations: rounds,
            ..TrainConfig::default()
        };
        let model = fit(&set, &cfg).unwrap();
        let oracle = ExactGbdt::fit(
            &x,
            &y,
            &ExactParams {
                learning_rate: cfg.learning_rate,
                max_depth: depth,
                rounds,
                min_leaf: cfg.min_samples_leaf,
            },
        );
        let (test_x, _) = random_rows(&mut rng, 200);
        let agree = test_x
            .iter()
            .chain(&x)
            .filter(|r| model.predict(r).unwrap() == (oracle.predict_proba(r) >= 0.5))
            .count();
        let rate = agree as f64 / (test_x.len() + x.len()) as f64;
        assert!(
            rate >= 0.95,
            "n={n} depth={depth} rounds={rounds}: agreement {rate}"
        );
    }
}

#[test]
fn exact_when_every_value_has_its_own_bin() {
    // With 40 rows and 64 bins no threshold is lost, so scores match closely.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (x, y) = random_rows(&mut rng, 40);
    let set = LabeledSet::new(
        x.iter()
            .zip(&y)
            .map(|(r, &l)| (FeatureVector::from_slice(r).unwrap(), l))
            .collect(),
    );
    let cfg = TrainConfig {
        max_depth: 2,
        n_iterations: 5,
        min_samples_leaf: 4,
        ..TrainConfig::default()
    };
    let model = fit(&set, &cfg).unwrap();
    let oracle = ExactGbdt::fit(
        &x,
        &y,
        &ExactParams {
            learning_rate: 0.1,
            max_depth: 2,
            rounds: 5,
            min_leaf: 4,
        },
    );
    for r in &x {
        let (a, b) = (model.predict_proba(r).unwrap(), oracle.predict_proba(r));
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}
