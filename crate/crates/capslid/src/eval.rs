//! Batch prediction, metrics, CSV export and long-recording segmentation.

use std::fmt::Write as _;

use capslid_core::capsnet::{predict, ModelParams, Prediction};
use capslid_core::dsp::{ModelInput, PcmSignal, StftConfig};
use capslid_core::metrics::{roc_one_vs_rest, MetricsReport, RocCurve};
use capslid_core::nonclass::ThresholdTable;
use rayon::prelude::*;

use crate::corpus::Dataset;
use crate::error::Result;
use crate::pipeline::clip_inputs;

/// Predictions in input order.
pub fn predict_all(params: &ModelParams, inputs: &[ModelInput]) -> Result<Vec<Prediction>> {
    Ok(inputs.par_iter().map(|x| predict(params, x)).collect::<capslid_core::Result<Vec<_>>>()?)
}

/// Predictions with the out-of-set flag applied.
pub fn detect_all(params: &ModelParams, inputs: &[ModelInput], thresholds: &ThresholdTable) -> Result<Vec<Prediction>> {
    predict_all(params, inputs)?
        .into_iter()
        .map(|p| Ok(thresholds.apply(p)?))
        .collect()
}

/// Metrics on a labelled set, with capsule norms as ROC scores.
pub fn evaluate(params: &ModelParams, data: &Dataset) -> Result<(MetricsReport, Vec<Option<RocCurve>>)> {
    if data.is_empty() {
        return Err(capslid_core::Error::EmptyDataset.into());
    }
    let classes = params.config().lang_caps;
    let scores: Vec<Vec<f64>> = predict_all(params, &data.inputs)?.into_iter().map(|p| p.norms).collect();
    let report = MetricsReport::from_scores(&scores, &data.labels, classes)?;
    let curves = roc_one_vs_rest(&scores, &data.labels, classes)?
        .into_iter()
        .enumerate()
        .map(|(c, r)| match r {
            Ok(curve) => Some(curve),
            Err(e) => {
                log::warn!("ROC curve for class {c} omitted: {e}");
                None
            }
        })
        .collect();
    Ok((report, curves))
}

/// Cuts `signal` into consecutive clips and classifies each on its own.
pub fn segment_and_classify(
    params: &ModelParams,
    signal: &PcmSignal,
    clip_seconds: u32,
    stft: &StftConfig,
) -> Result<Vec<Prediction>> {
    let inputs = clip_inputs(signal, clip_seconds, stft)?;
    predict_all(params, &inputs)
}

/// `actual,predicted,count` rows.
pub fn confusion_csv(report: &MetricsReport) -> String {
    let mut s = String::from("actual,predicted,count\n");
    for (a, row) in report.confusion.iter().enumerate() {
        for (p, n) in row.iter().enumerate() {
            writeln!(s, "{a},{p},{n}").unwrap();
        }
    }
    s
}

/// `class,fpr,tpr` rows, one block per available curve.
pub fn roc_csv(curves: &[Option<RocCurve>]) -> String {
    let mut s = String::from("class,fpr,tpr\n");
    for (c, curve) in curves.iter().enumerate() {
        for (fpr, tpr) in curve.iter().flat_map(|r| &r.points) {
            writeln!(s, "{c},{fpr},{tpr}").unwrap();
        }
    }
    s
}
