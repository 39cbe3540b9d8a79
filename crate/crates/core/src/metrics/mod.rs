//! Confusion-matrix metrics, ROC/AUC and trial aggregation.

mod svg;

pub use svg::roc_svg;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.tn + self.fp
    }

    pub fn accuracy(&self) -> Result<f64> {
        accuracy(self)
    }

    pub fn sensitivity(&self) -> Result<f64> {
        sensitivity(self)
    }

    pub fn specificity(&self) -> Result<f64> {
        specificity(self)
    }
}

fn check_lengths(scores: usize, labels: usize) -> Result<()> {
    if scores != labels {
        return Err(Error::shape("metrics", &[scores], &[labels]));
    }
    Ok(())
}

/// Predicts positive iff `score >= threshold`.
pub fn confusion<T: Scalar>(scores: &[T], labels: &[u8], threshold: T) -> Result<ConfusionMatrix> {
    check_lengths(scores.len(), labels.len())?;
    if !(threshold >= T::zero() && threshold <= T::one()) {
        return Err(Error::Contract(format!("threshold {threshold} outside [0, 1]")));
    }
    let mut cm = ConfusionMatrix::default();
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l == 1) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

/// `(TP + TN) / (TP + TN + FP + FN)`
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    if cm.total() == 0 {
        return Err(Error::UndefinedMetric {
            metric: "accuracy",
            reason: "no examples",
        });
    }
    Ok((cm.tp + cm.tn) as f64 / cm.total() as f64)
}

/// True positive rate `TP / (TP + FN)`.
pub fn sensitivity(cm: &ConfusionMatrix) -> Result<f64> {
    if cm.positives() == 0 {
        return Err(Error::UndefinedMetric {
            metric: "sensitivity",
            reason: "no positive examples",
        });
    }
    Ok(cm.tp as f64 / cm.positives() as f64)
}

/// True negative rate `TN / (TN + FP)`.
pub fn specificity(cm: &ConfusionMatrix) -> Result<f64> {
    if cm.negatives() == 0 {
        return Err(Error::UndefinedMetric {
            metric: "specificity",
            reason: "no negative examples",
        });
    }
    Ok(cm.tn as f64 / cm.negatives() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores at or above this value are called positive; `inf` for the origin.
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

/// ROC curve over every distinct score plus a `+inf` sentinel, and its
/// trapezoidal area. Tied scores move the curve diagonally, so the area
/// equals the Mann-Whitney statistic with ties counted as one half.
pub fn roc_auc<T: Scalar>(scores: &[T], labels: &[u8]) -> Result<(RocCurve, f64)> {
    check_lengths(scores.len(), labels.len())?;
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric {
            metric: "auc",
            reason: "needs both positive and negative labels",
        });
    }
    let mut order: Vec<(f64, u8)> = scores.iter().map(|s| s.as_f64()).zip(labels.iter().copied()).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (p, n) = (pos as f64, neg as f64);
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let threshold = order[i].0;
        while i < order.len() && order[i].0 == threshold {
            if order[i].1 == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let prev = points.last().expect("origin present");
        let (fpr, tpr) = (fp as f64 / n, tp as f64 / p);
        auc += (fpr - prev.fpr) * (tpr + prev.tpr) / 2.0;
        points.push(RocPoint { fpr, tpr, threshold });
    }
    Ok((RocCurve { points }, auc))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub auc: f64,
}

impl TrialMetrics {
    /// All four metrics at the given decision threshold.
    pub fn evaluate<T: Scalar>(scores: &[T], labels: &[u8], threshold: T) -> Result<Self> {
        let cm = confusion(scores, labels, threshold)?;
        let (_, auc) = roc_auc(scores, labels)?;
        Ok(TrialMetrics {
            accuracy: accuracy(&cm)?,
            sensitivity: sensitivity(&cm)?,
            specificity: specificity(&cm)?,
            auc,
        })
    }
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Summary { mean, std }
    }

    /// Two-decimal table form, e.g. `0.80 ± 0.01`.
    pub fn display(&self) -> String {
        format!("{:.2} ± {:.2}", self.mean, self.std)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub trials: Vec<TrialMetrics>,
    pub accuracy: Summary,
    pub sensitivity: Summary,
    pub specificity: Summary,
    pub auc: Summary,
}

impl MetricsReport {
    pub fn trial_count(&self) -> usize {
        self.trials.len()
    }
}

pub fn aggregate(trials: &[TrialMetrics]) -> Result<MetricsReport> {
    if trials.is_empty() {
        return Err(Error::Config("cannot aggregate zero trials".into()));
    }
    let col = |f: fn(&TrialMetrics) -> f64| Summary::of(&trials.iter().map(f).collect::<Vec<_>>());
    Ok(MetricsReport {
        trials: trials.to_vec(),
        accuracy: col(|t| t.accuracy),
        sensitivity: col(|t| t.sensitivity),
        specificity: col(|t| t.specificity),
        auc: col(|t| t.auc),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(tp: usize, fp: usize, tn: usize, fn_: usize) -> ConfusionMatrix {
        ConfusionMatrix { tp, fp, tn, fn_ }
    }

    #[test]
    fn confusion_basic() {
        let m = confusion(&[0.9, 0.1], &[1, 0], 0.5).unwrap();
        assert_eq!(m, cm(1, 0, 1, 0));
    }

    #[test]
    fn zero_threshold_calls_everything_positive() {
        let m = confusion(&[0.2, 0.7, 0.0, 0.4], &[1, 0, 0, 1], 0.0).unwrap();
        assert_eq!(m.tn + m.fn_, 0);
        assert_eq!(m.fp as f64 / m.negatives() as f64, 1.0);
        assert_eq!(sensitivity(&m).unwrap(), 1.0);
    }

    #[test]
    fn threshold_is_closed() {
        let m = confusion(&[0.5], &[1], 0.5).unwrap();
        assert_eq!(m.tp, 1);
    }

    #[test]
    fn confusion_length_mismatch() {
        assert!(matches!(confusion(&[0.1, 0.2], &[1], 0.5), Err(Error::Shape { .. })));
    }

    #[test]
    fn formula_examples() {
        assert_eq!(accuracy(&cm(50, 10, 30, 10)).unwrap(), 0.8);
        assert_eq!(accuracy(&cm(3, 0, 4, 0)).unwrap(), 1.0);
        assert_eq!(sensitivity(&cm(9, 0, 0, 1)).unwrap(), 0.9);
        assert_eq!(sensitivity(&cm(4, 2, 1, 0)).unwrap(), 1.0);
        assert_eq!(specificity(&cm(0, 2, 8, 0)).unwrap(), 0.8);
        assert_eq!(specificity(&cm(1, 0, 5, 1)).unwrap(), 1.0);
    }

    #[test]
    fn undefined_metrics_raise() {
        assert!(matches!(accuracy(&cm(0, 0, 0, 0)), Err(Error::UndefinedMetric { .. })));
        assert!(matches!(
            sensitivity(&cm(0, 3, 2, 0)),
            Err(Error::UndefinedMetric { .. })
        ));
        assert!(matches!(
            specificity(&cm(3, 0, 0, 2)),
            Err(Error::UndefinedMetric { .. })
        ));
        assert!(roc_auc(&[0.1, 0.2], &[1, 1]).is_err());
    }

    #[test]
    fn auc_extremes() {
        let (_, auc) = roc_auc(&[0.9, 0.8, 0.3, 0.1], &[1, 1, 0, 0]).unwrap();
        assert_eq!(auc, 1.0);
        let (curve, auc) = roc_auc(&[0.4; 6], &[1, 0, 1, 0, 0, 1]).unwrap();
        assert_eq!(auc, 0.5);
        assert_eq!(curve.points.len(), 2);
    }

    #[test]
    fn aggregate_examples() {
        let t = |a: f64| TrialMetrics {
            accuracy: a,
            sensitivity: a,
            specificity: a,
            auc: a,
        };
        let r = aggregate(&[t(0.8), t(0.8), t(0.8)]).unwrap();
        assert_eq!(r.accuracy.display(), "0.80 ± 0.00");
        let r = aggregate(&[t(0.7), t(0.9)]).unwrap();
        assert_eq!(r.accuracy.display(), "0.80 ± 0.14");
        let r = aggregate(&[t(0.79), t(0.81), t(0.80)]).unwrap();
        assert_eq!(r.accuracy.display(), "0.80 ± 0.01");
        assert_eq!(aggregate(&[t(0.5)]).unwrap().accuracy.std, 0.0);
        assert!(aggregate(&[]).is_err());
    }
}
