use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Binary confusion counts. [`Confusion::matrix`] lays them out as
/// `[[TN, FP], [FN, TP]]` (rows = truth, columns = prediction).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tp: usize,
}

impl Confusion {
    pub fn from_matrix(m: [[usize; 2]; 2]) -> Self {
        Self {
            tn: m[0][0],
            fp: m[0][1],
            fn_: m[1][0],
            tp: m[1][1],
        }
    }

    pub fn matrix(&self) -> [[usize; 2]; 2] {
        [[self.tn, self.fp], [self.fn_, self.tp]]
    }

    pub fn total(&self) -> usize {
        self.tn + self.fp + self.fn_ + self.tp
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` when only one class is present.
    pub roc_auc: Option<f64>,
    pub confusion: Confusion,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    /// Threshold-dependent metrics from confusion counts alone; `roc_auc` is
    /// left unset.
    pub fn from_confusion(c: Confusion) -> Self {
        Self {
            accuracy: ratio(c.tp + c.tn, c.total()),
            precision: ratio(c.tp, c.tp + c.fp),
            recall: ratio(c.tp, c.tp + c.fn_),
            f1: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
            roc_auc: None,
            confusion: c,
        }
    }

    pub fn from_scores(scores: &[f64], labels: &[bool], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for (&s, &y) in scores.iter().zip(labels) {
            match (y, s >= threshold) {
                (false, false) => c.tn += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (true, true) => c.tp += 1,
            }
        }
        Self {
            roc_auc: roc_auc(scores, labels),
            ..Self::from_confusion(c)
        }
    }
}

/// Area under the ROC curve via the rank-sum statistic, ties counted as
/// one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let pos = labels.iter().filter(|&&y| y).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based average rank of the tie group.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&k| labels[k]).count() as f64 * avg;
        i = j + 1;
    }
    let p = pos as f64;
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_classifier() {
        let labels: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let scores: Vec<f64> = labels.iter().map(|&y| if y { 0.9 } else { 0.1 }).collect();
        let m = Metrics::from_scores(&scores, &labels, 0.5);
        assert_eq!(m.f1, 1.0);
        assert_eq!(m.confusion.matrix(), [[10, 0], [0, 10]]);
        assert_eq!(m.roc_auc, Some(1.0));
    }

    #[test]
    fn all_positive_predictor() {
        let labels: Vec<bool> = (0..20).map(|i| i % 2 == 0).collect();
        let m = Metrics::from_scores(&[1.0; 20], &labels, 0.5);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.precision, 0.5);
        assert_eq!(m.roc_auc, Some(0.5));
    }

    #[test]
    fn reported_confusion_matrix_cross_check() {
        let m = Metrics::from_confusion(Confusion::from_matrix([[15, 6], [4, 20]]));
        assert!((m.accuracy - 35.0 / 45.0).abs() < 1e-15);
        assert!((m.accuracy - 0.77).abs() < 0.01);
        assert!((m.f1 - 0.80).abs() < 1e-12);
    }

    #[test]
    fn auc_matches_pair_counting() {
        let scores = [0.1, 0.4, 0.35, 0.8, 0.4, 0.2, 0.9];
        let labels = [false, false, true, true, true, false, true];
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        assert!((roc_auc(&scores, &labels).unwrap() - wins / pairs).abs() < 1e-15);
        assert_eq!(roc_auc(&[0.3], &[true]), None);
    }
}
