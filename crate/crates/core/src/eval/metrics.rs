//! Scalar classification metrics and ROC/AUC. The positive class is
//! schizophrenia throughout.

use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_positive: usize,
    pub true_negative: usize,
    pub false_positive: usize,
    pub false_negative: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.true_positive + self.true_negative + self.false_positive + self.false_negative
    }

    /// Tally predictions against truth (`true` = positive class).
    pub fn from_predictions(predicted: &[bool], truth: &[bool]) -> Self {
        debug_assert_eq!(predicted.len(), truth.len());
        let mut c = ConfusionCounts {
            true_positive: 0,
            true_negative: 0,
            false_positive: 0,
            false_negative: 0,
        };
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p, t) {
                (true, true) => c.true_positive += 1,
                (false, false) => c.true_negative += 1,
                (true, false) => c.false_positive += 1,
                (false, true) => c.false_negative += 1,
            }
        }
        c
    }
}

/// A metric whose denominator can vanish; `None` means undefined, which is
/// reported explicitly instead of collapsing to 0 or NaN.
pub type Metric = Option<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarMetrics {
    pub accuracy: Metric,
    pub sensitivity: Metric,
    pub specificity: Metric,
    pub f1: Metric,
}

fn ratio(num: usize, den: f64) -> Metric {
    if den == 0.0 {
        None
    } else {
        Some(num as f64 / den)
    }
}

/// accuracy = (TP+TN)/total, sensitivity = TP/(TP+FN),
/// specificity = TN/(TN+FP), F1 = TP/(TP + (FP+FN)/2).
pub fn confusion_metrics(c: &ConfusionCounts) -> ScalarMetrics {
    ScalarMetrics {
        accuracy: ratio(c.true_positive + c.true_negative, c.total() as f64),
        sensitivity: ratio(
            c.true_positive,
            (c.true_positive + c.false_negative) as f64,
        ),
        specificity: ratio(
            c.true_negative,
            (c.true_negative + c.false_positive) as f64,
        ),
        f1: ratio(
            c.true_positive,
            c.true_positive as f64 + 0.5 * (c.false_positive + c.false_negative) as f64,
        ),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MetricsError {
    /// ROC needs both classes present in the truth labels.
    SingleClassTruth,
    LengthMismatch { scores: usize, labels: usize },
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::SingleClassTruth => {
                write!(f, "ROC requires both classes in the truth labels")
            }
            MetricsError::LengthMismatch { scores, labels } => {
                write!(f, "{scores} scores vs {labels} labels")
            }
        }
    }
}

impl std::error::Error for MetricsError {}

/// Threshold sweep over the unique scores (ties grouped into one step),
/// AUC by the trapezoidal rule.
pub fn roc_auc(scores: &[f64], truth: &[bool]) -> Result<RocCurve, MetricsError> {
    if scores.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: truth.len(),
        });
    }
    let positives = truth.iter().filter(|t| **t).count();
    let negatives = truth.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::SingleClassTruth);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        // consume the whole tie group at this threshold
        while i < order.len() && scores[order[i]] == threshold {
            if truth[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let prev = *points.last().unwrap();
        let point = RocPoint {
            fpr: fp as f64 / negatives as f64,
            tpr: tp as f64 / positives as f64,
            threshold,
        };
        auc += (point.fpr - prev.fpr) * (point.tpr + prev.tpr) / 2.0;
        points.push(point);
    }
    Ok(RocCurve { points, auc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn reference_counts_reproduce_reported_metrics() {
        let c = ConfusionCounts {
            true_positive: 110,
            true_negative: 92,
            false_positive: 0,
            false_negative: 2,
        };
        let m = confusion_metrics(&c);
        assert!((m.accuracy.unwrap() - 0.990).abs() <= 1e-3);
        assert!((m.sensitivity.unwrap() - 0.982).abs() <= 1e-3);
        assert_eq!(m.specificity, Some(1.0));
        assert!((m.f1.unwrap() - 0.990).abs() <= 2e-3);
    }

    #[test]
    fn perfect_classifier_scores_ones_everywhere() {
        let m = confusion_metrics(&ConfusionCounts {
            true_positive: 10,
            true_negative: 20,
            false_positive: 0,
            false_negative: 0,
        });
        assert_eq!(m.accuracy, Some(1.0));
        assert_eq!(m.sensitivity, Some(1.0));
        assert_eq!(m.specificity, Some(1.0));
        assert_eq!(m.f1, Some(1.0));
    }

    #[test]
    fn zero_denominators_are_reported_undefined_not_nan() {
        let m = confusion_metrics(&ConfusionCounts {
            true_positive: 0,
            true_negative: 5,
            false_positive: 0,
            false_negative: 0,
        });
        assert_eq!(m.sensitivity, None, "no positives in the set");
        assert_eq!(m.f1, None);
        assert_eq!(m.specificity, Some(1.0));
    }

    #[test]
    fn metrics_are_invariant_under_item_order() {
        let predicted = [true, false, true, true, false, false, true];
        let truth = [true, false, false, true, true, false, true];
        let base = confusion_metrics(&ConfusionCounts::from_predictions(&predicted, &truth));
        let perm = [3usize, 0, 6, 2, 5, 1, 4];
        let p2: Vec<bool> = perm.iter().map(|&i| predicted[i]).collect();
        let t2: Vec<bool> = perm.iter().map(|&i| truth[i]).collect();
        assert_eq!(
            base,
            confusion_metrics(&ConfusionCounts::from_predictions(&p2, &t2))
        );
    }

    #[test]
    fn roc_endpoints_and_monotonicity() {
        let scores = [0.9, 0.1, 0.8, 0.4, 0.35, 0.35];
        let truth = [true, false, true, false, true, false];
        let roc = roc_auc(&scores, &truth).unwrap();
        let first = roc.points.first().unwrap();
        let last = roc.points.last().unwrap();
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in roc.points.windows(2) {
            assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
        assert!((0.0..=1.0).contains(&roc.auc));
    }

    #[test]
    fn perfectly_separated_scores_have_unit_auc() {
        let scores = [0.9, 0.8, 0.7, 0.2, 0.1];
        let truth = [true, true, true, false, false];
        assert_eq!(roc_auc(&scores, &truth).unwrap().auc, 1.0);
    }

    #[test]
    fn label_independent_scores_hover_near_half_auc() {
        let mut rng = crate::rng::seeded(99);
        let n = 4000;
        let scores: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let truth: Vec<bool> = (0..n).map(|_| rng.gen::<bool>()).collect();
        let auc = roc_auc(&scores, &truth).unwrap().auc;
        assert!((auc - 0.5).abs() <= 0.05, "auc {auc}");
    }

    #[test]
    fn reversing_scores_mirrors_auc() {
        let mut rng = crate::rng::seeded(7);
        let scores: Vec<f64> = (0..200).map(|_| rng.gen::<f64>()).collect();
        let truth: Vec<bool> = (0..200).map(|i| i % 3 == 0).collect();
        let auc = roc_auc(&scores, &truth).unwrap().auc;
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let mirrored = roc_auc(&neg, &truth).unwrap().auc;
        assert!((auc + mirrored - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn single_class_truth_is_rejected() {
        assert!(matches!(
            roc_auc(&[0.1, 0.9], &[true, true]),
            Err(MetricsError::SingleClassTruth)
        ));
    }
}
