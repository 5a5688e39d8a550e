//! Classification metrics: accuracy, per-class precision/recall/F1,
//! confusion matrix and one-vs-rest ROC curves.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::argmax;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// False when the class was never predicted (precision reported as 0).
    pub precision_defined: bool,
    /// False when the class never occurs (recall reported as 0).
    pub recall_defined: bool,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[actual][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// One-vs-rest AUC per class; `None` when the class has no positives or
    /// no negatives.
    pub auc: Vec<Option<f64>>,
    /// Unweighted mean over the classes with a defined AUC.
    pub macro_auc: Option<f64>,
    pub total: usize,
}

impl MetricsReport {
    /// `scores[n]` holds one score per class for sample `n`; the predicted
    /// class is the argmax (lowest index on ties).
    pub fn from_scores(scores: &[Vec<f64>], labels: &[usize], classes: usize) -> Result<Self> {
        check_inputs(scores, labels, classes)?;
        let predicted: Vec<usize> = scores.iter().map(|s| argmax(s)).collect();
        let mut report = Self::from_labels(&predicted, labels, classes)?;
        report.auc = roc_one_vs_rest(scores, labels, classes)?
            .into_iter()
            .map(|r| r.ok().map(|c| c.auc))
            .collect();
        let defined: Vec<f64> = report.auc.iter().flatten().copied().collect();
        report.macro_auc = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        Ok(report)
    }

    /// Metrics from hard predictions only; AUC fields are left empty.
    pub fn from_labels(predicted: &[usize], labels: &[usize], classes: usize) -> Result<Self> {
        if predicted.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} predictions for {} labels",
                predicted.len(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut confusion = vec![vec![0usize; classes]; classes];
        for (&p, &a) in predicted.iter().zip(labels) {
            for label in [p, a] {
                if label >= classes {
                    return Err(Error::LabelOutOfRange { label, classes });
                }
            }
            confusion[a][p] += 1;
        }
        let total = labels.len();
        let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
        let per_class = (0..classes)
            .map(|c| {
                let tp = confusion[c][c];
                let predicted_c: usize = (0..classes).map(|a| confusion[a][c]).sum();
                let support: usize = confusion[c].iter().sum();
                let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
                let precision = ratio(tp, predicted_c);
                let recall = ratio(tp, support);
                let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
                ClassMetrics {
                    precision,
                    recall,
                    f1,
                    precision_defined: predicted_c > 0,
                    recall_defined: support > 0,
                    support,
                }
            })
            .collect();
        Ok(Self {
            accuracy: correct as f64 / total as f64,
            per_class,
            confusion,
            auc: vec![None; classes],
            macro_auc: None,
            total,
        })
    }

    /// Pooled true positives over pooled actual positives.
    pub fn micro_recall(&self) -> f64 {
        let tp: usize = (0..self.confusion.len()).map(|c| self.confusion[c][c]).sum();
        let support: usize = self.per_class.iter().map(|m| m.support).sum();
        tp as f64 / support as f64
    }
}

fn check_inputs(scores: &[Vec<f64>], labels: &[usize], classes: usize) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!("{} score rows for {} labels", scores.len(), labels.len())));
    }
    if scores.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(row) = scores.iter().find(|r| r.len() != classes) {
        return Err(Error::ShapeMismatch(format!("score row of length {} for {classes} classes", row.len())));
    }
    if scores.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("classification scores".into()));
    }
    Ok(())
}

/// Receiver operating characteristic of one binary scoring.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)` from `(0,0)` to `(1,1)`,
    /// one point per distinct score threshold.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Sweeps the threshold down through every distinct score. Tied scores move
/// along a diagonal, which gives ties half credit in the area. Returns
/// `None` when there are no positives or no negatives.
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Option<RocCurve> {
    assert_eq!(scores.len(), positive.len(), "one flag per score");
    let pos = positive.iter().filter(|&&p| p).count();
    let neg = positive.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    // twice the area in units of one (positive, negative) pair
    let mut doubled_area: u128 = 0;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let score = scores[order[i]];
        let (tp_prev, fp_prev) = (tp, fp);
        while i < order.len() && scores[order[i]] == score {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        doubled_area += ((fp - fp_prev) * (tp + tp_prev)) as u128;
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = doubled_area as f64 / (2 * pos * neg) as f64;
    Some(RocCurve { points, auc })
}

/// One curve per class, scoring class `c` by `scores[n][c]`. Classes with
/// no positives or no negatives yield [`Error::DegenerateClass`].
pub fn roc_one_vs_rest(scores: &[Vec<f64>], labels: &[usize], classes: usize) -> Result<Vec<Result<RocCurve>>> {
    check_inputs(scores, labels, classes)?;
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    Ok((0..classes)
        .map(|c| {
            let s: Vec<f64> = scores.iter().map(|r| r[c]).collect();
            let p: Vec<bool> = labels.iter().map(|&l| l == c).collect();
            roc_curve(&s, &p).ok_or(Error::DegenerateClass(c))
        })
        .collect())
}
