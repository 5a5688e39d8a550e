//! Out-of-set detection with one capsule-norm threshold per language.
//!
//! A threshold is the smallest norm the predicted capsule reached on a
//! correctly classified calibration sample of that language. At detection
//! time a prediction whose winning norm falls strictly below its language's
//! threshold is flagged as belonging to none of the known languages.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::capsnet::{predict, ModelParams, Prediction};
use crate::dsp::ModelInput;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdTable {
    tau: Vec<f64>,
    counts: Vec<usize>,
}

impl ThresholdTable {
    /// Validates `tau[ℓ] ∈ (0, 1)` and `counts[ℓ] ≥ 1` for every language.
    pub fn new(tau: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        if tau.is_empty() || tau.len() != counts.len() {
            return Err(Error::InvalidConfig(format!(
                "{} thresholds with {} counts",
                tau.len(),
                counts.len()
            )));
        }
        if let Some(l) = counts.iter().position(|&c| c == 0) {
            return Err(Error::CalibrationInsufficient(l));
        }
        if let Some(l) = tau.iter().position(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err(Error::InvalidConfig(format!("threshold {l} = {} outside (0, 1)", tau[l])));
        }
        Ok(Self { tau, counts })
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    /// True positives that contributed to each threshold.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn num_languages(&self) -> usize {
        self.tau.len()
    }

    /// Sets `is_non_class` on `prediction`; the label is never changed.
    pub fn apply(&self, mut prediction: Prediction) -> Result<Prediction> {
        let tau = *self.tau.get(prediction.label).ok_or(Error::LabelOutOfRange {
            label: prediction.label,
            classes: self.tau.len(),
        })?;
        prediction.is_non_class = prediction.label_norm() < tau;
        Ok(prediction)
    }
}

/// Builds thresholds from predictions already made on a labelled
/// calibration set.
pub fn calibrate_from_predictions(predictions: &[Prediction], labels: &[usize], languages: usize) -> Result<ThresholdTable> {
    if predictions.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut tau = vec![f64::INFINITY; languages];
    let mut counts = vec![0usize; languages];
    for (p, &label) in predictions.iter().zip(labels) {
        if label >= languages {
            return Err(Error::LabelOutOfRange { label, classes: languages });
        }
        if p.label == label {
            tau[label] = tau[label].min(p.label_norm());
            counts[label] += 1;
        }
    }
    ThresholdTable::new(tau, counts)
}

/// Runs the model on every calibration sample and builds the thresholds.
pub fn calibrate(params: &ModelParams, samples: &[(ModelInput, usize)]) -> Result<ThresholdTable> {
    let predictions = samples.iter().map(|(x, _)| predict(params, x)).collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = samples.iter().map(|&(_, l)| l).collect();
    calibrate_from_predictions(&predictions, &labels, params.config().lang_caps)
}

/// Predicts and flags out-of-set inputs.
pub fn detect(params: &ModelParams, input: &ModelInput, thresholds: &ThresholdTable) -> Result<Prediction> {
    thresholds.apply(predict(params, input)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(norms: &[f64]) -> Prediction {
        Prediction::from_norms(norms.to_vec())
    }

    #[test]
    fn threshold_is_minimum_true_positive_norm() {
        let preds = [
            pred(&[0.91, 0.1, 0.1]),
            pred(&[0.85, 0.1, 0.1]),
            pred(&[0.93, 0.1, 0.1]),
            pred(&[0.2, 0.7, 0.1]),
            pred(&[0.95, 0.3, 0.1]), // misclassified language 1: ignored
            pred(&[0.1, 0.1, 0.6]),
        ];
        let t = calibrate_from_predictions(&preds, &[0, 0, 0, 1, 1, 2], 3).unwrap();
        assert_eq!(t.tau(), &[0.85, 0.7, 0.6]);
        assert_eq!(t.counts(), &[3, 1, 1]);
    }

    #[test]
    fn language_without_true_positive_is_insufficient() {
        let preds = [pred(&[0.9, 0.1]), pred(&[0.8, 0.3])];
        let err = calibrate_from_predictions(&preds, &[0, 1], 2).unwrap_err();
        assert!(matches!(err, Error::CalibrationInsufficient(1)));
    }

    #[test]
    fn boundary_norm_stays_in_class() {
        let t = ThresholdTable::new(vec![0.5, 0.6], vec![1, 1]).unwrap();
        assert!(!t.apply(pred(&[0.5, 0.1])).unwrap().is_non_class);
        let below = t.apply(pred(&[0.49, 0.1])).unwrap();
        assert!(below.is_non_class);
        assert_eq!(below.label, 0);
    }

    #[test]
    fn table_validation() {
        assert!(ThresholdTable::new(vec![0.0, 0.5], vec![1, 1]).is_err());
        assert!(ThresholdTable::new(vec![1.0, 0.5], vec![1, 1]).is_err());
        assert!(ThresholdTable::new(vec![0.5], vec![1, 1]).is_err());
        assert!(ThresholdTable::new(vec![0.5, 0.5], vec![1, 0]).is_err());
    }
}
