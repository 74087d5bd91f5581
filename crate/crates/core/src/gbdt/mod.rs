//! Histogram-based gradient-boosted decision trees for binary classification.
//!
//! Logistic loss, Newton leaf values, level-wise growth to `max_depth` with a
//! `min_samples_leaf` constraint, and quantile-binned split search. Training
//! is deterministic: the only randomness is fold shuffling in
//! [`cross_validate`], which is seeded.

mod binning;
mod cv;
mod metrics;
mod tree;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureVector;
use crate::stats::sigmoid;

pub use binning::{bin_of, compute_edges};
pub use cv::{cross_validate, stratified_folds, CvResult, GridScore};
pub use metrics::{roc_auc, Confusion, Metrics};
pub use tree::{Node, Tree};

/// Smallest hessian sum allowed on either side of a split.
pub const MIN_HESSIAN: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GbdtError {
    #[error("invalid training config: {0}")]
    InvalidConfig(&'static str),
    #[error("training set is empty")]
    EmptyData,
    #[error("training set has a single class")]
    SingleClass,
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(&'static str),
    #[error("invalid model: {0}")]
    InvalidModel(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_depth: usize,
    pub n_iterations: usize,
    pub min_samples_leaf: usize,
    pub n_bins: usize,
    pub seed: u64,
    pub l2_regularization: f64,
    /// Probability at or above which a window counts as a gaze preamble.
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            max_depth: 7,
            n_iterations: 100,
            min_samples_leaf: 8,
            n_bins: 64,
            seed: 0,
            l2_regularization: 0.0,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    /// Every violated constraint, in field order.
    pub fn problems(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            out.push("learning_rate must be > 0");
        }
        if self.max_depth < 1 {
            out.push("max_depth must be >= 1");
        }
        if self.n_iterations < 1 {
            out.push("n_iterations must be >= 1");
        }
        if self.min_samples_leaf < 1 {
            out.push("min_samples_leaf must be >= 1");
        }
        if !(2..=256).contains(&self.n_bins) {
            out.push("n_bins must lie in [2, 256]");
        }
        if !(self.l2_regularization >= 0.0) {
            out.push("l2_regularization must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            out.push("threshold must lie in [0, 1]");
        }
        out
    }

    pub fn validate(&self) -> Result<(), GbdtError> {
        match self.problems().first() {
            Some(p) => Err(GbdtError::InvalidConfig(p)),
            None => Ok(()),
        }
    }
}

/// Feature rows with binary labels (`true` = gaze preamble).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledSet {
    pub rows: Vec<(FeatureVector, bool)>,
}

impl LabeledSet {
    pub fn new(rows: Vec<(FeatureVector, bool)>) -> Self {
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.rows.iter().filter(|r| r.1).count()
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledSet {
        LabeledSet::new(indices.iter().map(|&i| self.rows[i]).collect())
    }

    fn check_trainable(&self) -> Result<(), GbdtError> {
        if self.rows.is_empty() {
            return Err(GbdtError::EmptyData);
        }
        let pos = self.positives();
        if pos == 0 || pos == self.rows.len() {
            return Err(GbdtError::SingleClass);
        }
        Ok(())
    }
}

/// A trained ensemble. Immutable after [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel {
    base_score: f64,
    bin_edges: Vec<Vec<f64>>,
    trees: Vec<Tree>,
    config: TrainConfig,
    degenerate_features: Vec<usize>,
}

impl GbdtModel {
    /// Assembles a model from stored parts, checking structural invariants.
    pub fn from_parts(
        base_score: f64,
        bin_edges: Vec<Vec<f64>>,
        trees: Vec<Tree>,
        config: TrainConfig,
    ) -> Result<Self, GbdtError> {
        config.validate()?;
        if !base_score.is_finite() {
            return Err(GbdtError::InvalidModel("base_score must be finite"));
        }
        for edges in &bin_edges {
            if edges.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(GbdtError::InvalidModel(
                    "bin edges must be strictly increasing",
                ));
            }
        }
        for t in &trees {
            t.check(bin_edges.len())?;
        }
        let degenerate_features = bin_edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.is_empty())
            .map(|(i, _)| i)
            .collect();
        Ok(Self {
            base_score,
            bin_edges,
            trees,
            config,
            degenerate_features,
        })
    }

    /// A model with no trees; predicts `sigmoid(base_score)` everywhere.
    pub fn constant(base_score: f64, n_features: usize, config: TrainConfig) -> Self {
        Self::from_parts(
            base_score,
            alloc::vec![Vec::new(); n_features],
            Vec::new(),
            config,
        )
        .expect("constant model is valid")
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn bin_edges(&self) -> &[Vec<f64>] {
        &self.bin_edges
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn n_features(&self) -> usize {
        self.bin_edges.len()
    }

    /// Columns that were constant in the training data.
    pub fn degenerate_features(&self) -> &[usize] {
        &self.degenerate_features
    }

    pub fn threshold(&self) -> f64 {
        self.config.threshold
    }

    /// Summed log-odds for a raw feature row.
    pub fn raw_score(&self, x: &[f64]) -> Result<f64, GbdtError> {
        if x.len() != self.n_features() {
            return Err(GbdtError::DimensionMismatch {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        Ok(self.base_score + self.trees.iter().map(|t| t.predict(x)).sum::<f64>())
    }

    /// Probability of the positive class.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, GbdtError> {
        self.raw_score(x).map(sigmoid)
    }

    /// Probability thresholded at the configured decision threshold.
    pub fn predict(&self, x: &[f64]) -> Result<bool, GbdtError> {
        Ok(self.predict_proba(x)? >= self.config.threshold)
    }
}

/// Per-round training diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    /// Mean training log-loss after each boosting round (index 0 = prior).
    pub log_loss: Vec<f64>,
}

/// Trains a model. See [`fit_with_log`] for per-round loss.
pub fn fit(data: &LabeledSet, config: &TrainConfig) -> Result<GbdtModel, GbdtError> {
    fit_with_log(data, config).map(|(m, _)| m)
}

pub fn fit_with_log(
    data: &LabeledSet,
    config: &TrainConfig,
) -> Result<(GbdtModel, TrainLog), GbdtError> {
    config.validate()?;
    data.check_trainable()?;

    let n = data.len();
    let n_features = crate::features::FEATURE_COUNT;
    let labels: Vec<f64> = data
        .rows
        .iter()
        .map(|r| if r.1 { 1.0 } else { 0.0 })
        .collect();

    let mut bin_edges = Vec::with_capacity(n_features);
    for j in 0..n_features {
        let column: Vec<f64> = data.rows.iter().map(|r| r.0 .0[j]).collect();
        let edges = compute_edges(&column, config.n_bins);
        if edges.is_empty() {
            log::warn!("feature {j} is constant in the training data");
        }
        bin_edges.push(edges);
    }
    let binned: Vec<[u8; crate::features::FEATURE_COUNT]> = data
        .rows
        .iter()
        .map(|r| core::array::from_fn(|j| bin_of(r.0 .0[j], &bin_edges[j])))
        .collect();

    let p = labels.iter().sum::<f64>() / n as f64;
    let base_score = libm::log(p / (1.0 - p));
    let mut raw = alloc::vec![base_score; n];
    let mut log_loss = alloc::vec![mean_log_loss(&raw, &labels)];
    let mut grad = alloc::vec![0.0; n];
    let mut hess = alloc::vec![0.0; n];

    let mut trees = Vec::with_capacity(config.n_iterations);
    for _ in 0..config.n_iterations {
        for i in 0..n {
            let prob = sigmoid(raw[i]);
            grad[i] = prob - labels[i];
            hess[i] = prob * (1.0 - prob);
        }
        let tree = tree::grow(&binned, &bin_edges, &grad, &hess, config);
        for (i, row) in binned.iter().enumerate() {
            raw[i] += tree.predict_binned(row);
        }
        log_loss.push(mean_log_loss(&raw, &labels));
        trees.push(tree);
    }

    let model = GbdtModel::from_parts(base_score, bin_edges, trees, *config)?;
    Ok((model, TrainLog { log_loss }))
}

fn mean_log_loss(raw: &[f64], labels: &[f64]) -> f64 {
    // log(1 + e^z) - y z, computed stably.
    let total: f64 = raw
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            let softplus = if z > 0.0 {
                z + libm::log1p(libm::exp(-z))
            } else {
                libm::log1p(libm::exp(z))
            };
            softplus - y * z
        })
        .sum();
    total / raw.len() as f64
}

/// Metrics of `model` on `data` at the model's threshold.
pub fn evaluate(model: &GbdtModel, data: &LabeledSet) -> Result<Metrics, GbdtError> {
    let mut scores = Vec::with_capacity(data.len());
    let mut labels = Vec::with_capacity(data.len());
    for (x, y) in &data.rows {
        scores.push(model.predict_proba(x.as_slice())?);
        labels.push(*y);
    }
    Ok(Metrics::from_scores(&scores, &labels, model.threshold()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FEATURE_COUNT;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn clusters(n_per_class: usize, seed: u64, gap: f64) -> LabeledSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for i in 0..2 * n_per_class {
            let label = i % 2 == 0;
            let centre = if label { gap } else { -gap };
            let mut v = [0.0; FEATURE_COUNT];
            for (j, x) in v.iter_mut().enumerate() {
                let noise: f64 = rng.random_range(-1.0..1.0);
                *x = if j < 2 { centre + noise } else { noise };
            }
            rows.push((FeatureVector(v), label));
        }
        LabeledSet::new(rows)
    }

    #[test]
    fn zero_tree_model_predicts_half() {
        let m = GbdtModel::constant(0.0, FEATURE_COUNT, TrainConfig::default());
        assert_eq!(m.predict_proba(&[0.0; FEATURE_COUNT]), Ok(0.5));
    }

    #[test]
    fn wrong_width_is_rejected() {
        let m = GbdtModel::constant(0.0, FEATURE_COUNT, TrainConfig::default());
        assert_eq!(
            m.predict_proba(&[0.0; 20]),
            Err(GbdtError::DimensionMismatch {
                expected: 21,
                got: 20
            })
        );
    }

    #[test]
    fn single_class_is_rejected() {
        let mut data = clusters(10, 1, 3.0);
        for r in &mut data.rows {
            r.1 = true;
        }
        assert_eq!(
            fit(&data, &TrainConfig::default()),
            Err(GbdtError::SingleClass)
        );
        assert_eq!(
            fit(&LabeledSet::default(), &TrainConfig::default()),
            Err(GbdtError::EmptyData)
        );
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let data = clusters(10, 1, 3.0);
        for cfg in [
            TrainConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            TrainConfig {
                max_depth: 0,
                ..Default::default()
            },
            TrainConfig {
                n_iterations: 0,
                ..Default::default()
            },
            TrainConfig {
                min_samples_leaf: 0,
                ..Default::default()
            },
            TrainConfig {
                n_bins: 1,
                ..Default::default()
            },
            TrainConfig {
                n_bins: 257,
                ..Default::default()
            },
        ] {
            assert!(matches!(fit(&data, &cfg), Err(GbdtError::InvalidConfig(_))));
        }
    }

    #[test]
    fn separable_clusters_fit_perfectly_within_twenty_rounds() {
        let data = clusters(50, 7, 3.0);
        let cfg = TrainConfig {
            n_iterations: 20,
            ..Default::default()
        };
        let m = fit(&data, &cfg).unwrap();
        let metrics = evaluate(&m, &data).unwrap();
        assert_eq!(metrics.accuracy, 1.0);
    }

    #[test]
    fn training_loss_never_increases() {
        let data = clusters(60, 3, 0.6);
        let (_, log) = fit_with_log(&data, &TrainConfig::default()).unwrap();
        assert_eq!(log.log_loss.len(), 101);
        for w in log.log_loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn refits_are_identical() {
        let data = clusters(40, 11, 1.0);
        let a = fit(&data, &TrainConfig::default()).unwrap();
        let b = fit(&data, &TrainConfig::default()).unwrap();
        assert_eq!(a, b);
        let probe = clusters(20, 12, 1.0);
        for (x, _) in &probe.rows {
            assert_eq!(a.predict_proba(x.as_slice()), b.predict_proba(x.as_slice()));
        }
    }

    #[test]
    fn constant_columns_are_reported() {
        let data = clusters(20, 5, 2.0);
        let m = fit(
            &data,
            &TrainConfig {
                n_iterations: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(m.degenerate_features().is_empty());
        let mut flat = data.clone();
        for r in &mut flat.rows {
            r.0 .0[4] = 1.0;
        }
        let m = fit(
            &flat,
            &TrainConfig {
                n_iterations: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(m.degenerate_features(), &[4]);
    }
}
