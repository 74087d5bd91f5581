mod oracle;

use engage_core::features::{
    compute_features, window_features, FeatureConfig, SignalWindow, FEATURE_COUNT,
};
use engage_core::gate::{group_triggers, GateConfig, TriggerEvent, TriggerKind};
use engage_core::gbdt::{fit, LabeledSet, TrainConfig};
use engage_core::pose::{normalize_pose, TrackId};
use engage_core::sim::analysis_text;
use engage_core::vlm::{parse_analysis, u_sc, IntentVotes};
use engage_core::{FeatureVector, Intent};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn normalization_ignores_translation_and_scale(
        seed in any::<u64>(), dx in -500.0..500.0f64, dy in -500.0..500.0f64, s in 0.2..5.0f64,
    ) {
        let frames = oracle::random_window(&mut ChaCha8Rng::seed_from_u64(seed), 30);
        let moved: Vec<_> = frames
            .iter()
            .cloned()
            .map(|mut f| {
                for k in f.keypoints.iter_mut().flatten() {
                    k.x = k.x * s + dx;
                    k.y = k.y * s + dy;
                }
                f
            })
            .collect();
        for (a, b) in frames.iter().zip(&moved) {
            let (na, nb) = (normalize_pose(a, 0.3).unwrap(), normalize_pose(b, 0.3).unwrap());
            for (p, q) in na.points.iter().zip(&nb.points) {
                let (p, q) = (p.unwrap(), q.unwrap());
                prop_assert!(close(p.x, q.x) && close(p.y, q.y));
            }
        }
        let cfg = FeatureConfig::default();
        let id = TrackId::new("p1");
        let (_, fa) = window_features(&id, 0.0, &frames, &cfg).unwrap();
        let (_, fb) = window_features(&id, 0.0, &moved, &cfg).unwrap();
        for (a, b) in fa.as_slice().iter().zip(fb.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-9, "{} vs {}", a, b);
        }
    }

    #[test]
    fn features_ignore_signal_offsets(
        series in proptest::collection::vec(-2.0..2.0f64, 2..40),
        offsets in proptest::array::uniform7(-100.0..100.0f64),
    ) {
        let base: [Vec<f64>; 7] = std::array::from_fn(|i| series.iter().map(|v| v * (i + 1) as f64).collect());
        let shifted: [Vec<f64>; 7] = std::array::from_fn(|i| base[i].iter().map(|v| v + offsets[i]).collect());
        let a = compute_features(&SignalWindow::new("p".into(), 0.0, base).unwrap());
        let b = compute_features(&SignalWindow::new("p".into(), 0.0, shifted).unwrap());
        prop_assert_eq!(a.as_slice().len(), FEATURE_COUNT);
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn boosting_ignores_monotone_column_transforms(seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<(Vec<f64>, bool)> = (0..80)
            .map(|_| {
                let r: Vec<f64> = (0..FEATURE_COUNT).map(|_| rng.random_range(-1.0..1.0)).collect();
                let y = r[0] + 0.5 * r[5] + rng.random_range(-0.5..0.5) > 0.0;
                (r, y)
            })
            .collect();
        // exp is strictly increasing, so split ranks are unchanged.
        let warp = |r: &[f64]| r.iter().map(|v| (2.0 * v).exp() - 3.0).collect::<Vec<_>>();
        let set = |f: &dyn Fn(&[f64]) -> Vec<f64>| {
            LabeledSet::new(rows.iter().map(|(r, y)| (FeatureVector::from_slice(&f(r)).unwrap(), *y)).collect())
        };
        let cfg = TrainConfig { max_depth: 3, n_iterations: 10, ..TrainConfig::default() };
        let plain = fit(&set(&|r| r.to_vec()), &cfg).unwrap();
        let warped = fit(&set(&warp), &cfg).unwrap();
        for (r, _) in &rows {
            let (a, b) = (plain.predict_proba(r).unwrap(), warped.predict_proba(&warp(r)).unwrap());
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn u_sc_ignores_order(perm in Just((0..5usize).collect::<Vec<_>>()).prop_shuffle(), split in 0..=5usize) {
        let texts: Vec<String> = (0..5)
            .map(|i| analysis_text(if i < split { Intent::Interact } else { Intent::NoIntent }, false))
            .collect();
        let parsed: Vec<_> = texts.iter().map(|t| parse_analysis(t, 6.0)).collect();
        let permuted: Vec<_> = perm.iter().map(|&i| parsed[i].clone()).collect();
        let (a, b) = (IntentVotes::tally(&parsed), IntentVotes::tally(&permuted));
        prop_assert_eq!(a, b);
        prop_assert_eq!(u_sc(&a), u_sc(&b));
    }

    #[test]
    fn raising_eta_never_adds_deferrals(i in 0..=5usize, n in 0..=5usize, eta in 0.0..1.0f64, bump in 0.0..1.0f64) {
        let n = n.min(5 - i);
        let v = IntentVotes { interact: i, no_intent: n, inconclusive: 5 - i - n };
        let u = u_sc(&v);
        prop_assert!(!(u <= eta && u > eta + bump));
    }

    #[test]
    fn grouped_triggers_are_separated(times in proptest::collection::vec(0.0..30.0f64, 0..20)) {
        let cfg = GateConfig::default();
        let mut times = times;
        times.sort_by(f64::total_cmp);
        let events: Vec<_> = times
            .iter()
            .map(|&t| TriggerEvent::new("p".into(), TriggerKind::GazeShift, t, Some(1.0), &cfg, 30.0))
            .collect();
        let grouped = group_triggers(&events, &cfg);
        prop_assert!(grouped.len() <= events.len());
        for e in &grouped {
            prop_assert!(e.clip.start_s >= 0.0 && e.clip.end_s <= 30.0);
            prop_assert!(e.clip.contains(e.trigger_time));
        }
        // Chain merging: every raw trigger is within the merge gap of its
        // predecessor or starts a new group.
        let starts = times.windows(2).filter(|w| w[1] - w[0] > cfg.group_merge_s + 1e-6).count();
        prop_assert_eq!(grouped.len(), if times.is_empty() { 0 } else { starts + 1 });
    }
}

#[test]
fn u_sc_over_every_vote_partition() {
    let eta = 0.25;
    let mut seen = 0;
    for i in 0..=5 {
        for n in 0..=5 - i {
            let v = IntentVotes {
                interact: i,
                no_intent: n,
                inconclusive: 5 - i - n,
            };
            let max = i.max(n).max(5 - i - n);
            let u = u_sc(&v);
            assert_eq!(u, 1.0 - max as f64 / 5.0);
            assert!([0.0, 0.2, 0.4, 0.6].iter().any(|&x| (u - x).abs() < 1e-12));
            assert_eq!(u > eta, max < 4, "{i}-{n}");
            seen += 1;
        }
    }
    assert_eq!(seen, 21);
}
