use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{evaluate, fit, GbdtError, LabeledSet, TrainConfig};

/// Mean and per-fold F1 for one grid entry.
#[derive(Debug, Clone, PartialEq)]
pub struct GridScore {
    pub config: TrainConfig,
    pub fold_f1: Vec<f64>,
    pub mean_f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub best: TrainConfig,
    pub scores: Vec<GridScore>,
}

/// Stratified fold assignment: each class is shuffled with `seed`, then rows
/// are dealt round-robin (positives first, then negatives).
pub fn stratified_folds(data: &LabeledSet, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<usize> = (0..data.len()).filter(|&i| data.rows[i].1).collect();
    let mut neg: Vec<usize> = (0..data.len()).filter(|&i| !data.rows[i].1).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut folds = alloc::vec![Vec::new(); k];
    for (slot, i) in pos.into_iter().chain(neg).enumerate() {
        folds[slot % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

/// k-fold grid search maximizing mean F1. Ties go to fewer iterations, then
/// shallower trees, then earlier grid position.
pub fn cross_validate(
    data: &LabeledSet,
    grid: &[TrainConfig],
    k: usize,
) -> Result<CvResult, GbdtError> {
    if grid.is_empty() {
        return Err(GbdtError::InsufficientData("empty grid"));
    }
    if k < 2 {
        return Err(GbdtError::InsufficientData("need at least 2 folds"));
    }
    if data.len() < k {
        return Err(GbdtError::InsufficientData("fewer rows than folds"));
    }
    data.check_trainable()?;

    let seed = grid[0].seed;
    let folds = stratified_folds(data, k, seed);
    let mut scores = Vec::with_capacity(grid.len());
    for config in grid {
        let mut fold_f1 = Vec::with_capacity(k);
        for (fi, test_idx) in folds.iter().enumerate() {
            let train_idx: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(fj, _)| *fj != fi)
                .flat_map(|(_, f)| f.iter().copied())
                .collect();
            let model = fit(&data.subset(&train_idx), config)?;
            fold_f1.push(evaluate(&model, &data.subset(test_idx))?.f1);
        }
        let mean_f1 = fold_f1.iter().sum::<f64>() / k as f64;
        scores.push(GridScore {
            config: *config,
            fold_f1,
            mean_f1,
        });
    }

    let best = scores
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| {
            b.mean_f1
                .total_cmp(&a.mean_f1)
                .then(a.config.n_iterations.cmp(&b.config.n_iterations))
                .then(a.config.max_depth.cmp(&b.config.max_depth))
                .then(ia.cmp(ib))
        })
        .map(|(_, s)| s.config)
        .expect("grid is non-empty");
    Ok(CvResult { best, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbdt::tests::clusters;

    #[test]
    fn folds_partition_rows() {
        let data = clusters(25, 2, 1.0);
        let folds = stratified_folds(&data, 5, 9);
        assert!(folds.iter().all(|f| f.len() == 10));
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        for f in &folds {
            assert_eq!(f.iter().filter(|&&i| data.rows[i].1).count(), 5);
        }
    }

    #[test]
    fn singleton_grid_returns_its_config() {
        let data = clusters(20, 4, 2.0);
        let cfg = TrainConfig {
            n_iterations: 5,
            max_depth: 2,
            ..Default::default()
        };
        let r = cross_validate(&data, &[cfg], 5).unwrap();
        assert_eq!(r.best, cfg);
        assert_eq!(r.scores[0].fold_f1.len(), 5);
    }

    #[test]
    fn better_config_wins() {
        // Signal only in feature 0 and 1; a one-round tree with a tiny learning
        // rate cannot move off the prior, so it predicts a single class.
        let data = clusters(30, 8, 2.0);
        let weak = TrainConfig {
            n_iterations: 1,
            max_depth: 1,
            learning_rate: 1e-6,
            threshold: 0.5 + 1e-3,
            ..Default::default()
        };
        let strong = TrainConfig {
            n_iterations: 20,
            max_depth: 3,
            ..Default::default()
        };
        let r = cross_validate(&data, &[weak, strong], 5).unwrap();
        assert_eq!(r.best, strong);
        assert!(r.scores[1].mean_f1 > r.scores[0].mean_f1);
    }

    #[test]
    fn ties_prefer_fewer_iterations() {
        let data = clusters(20, 6, 5.0);
        let a = TrainConfig {
            n_iterations: 30,
            ..Default::default()
        };
        let b = TrainConfig {
            n_iterations: 10,
            ..Default::default()
        };
        let r = cross_validate(&data, &[a, b], 4).unwrap();
        assert_eq!(r.scores[0].mean_f1, r.scores[1].mean_f1);
        assert_eq!(r.best, b);
    }

    #[test]
    fn insufficient_data() {
        let data = clusters(2, 6, 5.0);
        assert!(matches!(
            cross_validate(&data, &[TrainConfig::default()], 5),
            Err(GbdtError::InsufficientData(_))
        ));
        assert!(matches!(
            cross_validate(&data, &[TrainConfig::default()], 1),
            Err(GbdtError::InsufficientData(_))
        ));
    }
}
