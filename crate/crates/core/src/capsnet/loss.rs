use alloc::format;
use alloc::vec::Vec;

use super::model::{build_encoder, build_training_loss, reconstruct, CapsuleOutputs};
use super::ModelParams;
use crate::autodiff::Graph;
use crate::dsp::ModelInput;
use crate::math::argmax;
use crate::{Error, Result, Tensor};

/// Margin loss constants and the reconstruction weight.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MarginLossConfig {
    pub m_plus: f64,
    pub m_minus: f64,
    pub lambda: f64,
    pub recon_weight: f64,
}

impl Default for MarginLossConfig {
    fn default() -> Self {
        Self { m_plus: 0.9, m_minus: 0.1, lambda: 0.5, recon_weight: 0.0005 }
    }
}

impl MarginLossConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.m_minus
            && self.m_minus < self.m_plus
            && self.m_plus < 1.0
            && self.lambda > 0.0
            && self.recon_weight >= 0.0
            && self.recon_weight.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid margin loss config {self:?}")))
        }
    }
}

/// `Σ_c T_c·max(0, m⁺ − ‖v_c‖)² + λ(1 − T_c)·max(0, ‖v_c‖ − m⁻)²`.
pub fn margin_loss(outputs: &CapsuleOutputs, true_label: usize, cfg: &MarginLossConfig) -> Result<f64> {
    let classes = outputs.norms.len();
    if true_label >= classes {
        return Err(Error::LabelOutOfRange { label: true_label, classes });
    }
    Ok(outputs
        .norms
        .iter()
        .enumerate()
        .map(|(c, &n)| {
            if c == true_label {
                let h = (cfg.m_plus - n).max(0.0);
                h * h
            } else {
                let h = (n - cfg.m_minus).max(0.0);
                cfg.lambda * h * h
            }
        })
        .sum())
}

/// Margin loss plus `recon_weight · Σ (reconstruction − input)²`, where the
/// reconstruction decodes the true-label capsule.
pub fn total_loss(
    input: &ModelInput,
    outputs: &CapsuleOutputs,
    true_label: usize,
    params: &ModelParams,
    cfg: &MarginLossConfig,
) -> Result<f64> {
    let margin = margin_loss(outputs, true_label, cfg)?;
    let recon = reconstruct(&outputs.vectors[true_label], params)?;
    let err: f64 = recon.iter().zip(input.pixels()).map(|(r, x)| (r - x) * (r - x)).sum();
    Ok(margin + cfg.recon_weight * err)
}

/// Loss terms of one training example.
#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    pub margin: f64,
    pub reconstruction_error: f64,
    pub total: f64,
    pub norms: Vec<f64>,
}

impl LossBreakdown {
    pub fn predicted(&self) -> usize {
        argmax(&self.norms)
    }
}

/// Total loss of one example and its gradient w.r.t. every parameter tensor,
/// in [`ParamSlot`](super::ParamSlot) order.
pub fn loss_and_gradients(
    params: &ModelParams,
    input: &Tensor,
    label: usize,
    cfg: &MarginLossConfig,
) -> Result<(LossBreakdown, Vec<Tensor>)> {
    let mut g = Graph::new();
    let enc = build_encoder(&mut g, params, input, true)?;
    let loss = build_training_loss(&mut g, &enc, label, cfg)?;
    let scalar = |id| g.value(id).data()[0];
    let breakdown = LossBreakdown {
        margin: scalar(loss.margin),
        reconstruction_error: scalar(loss.reconstruction_error),
        total: scalar(loss.total),
        norms: g.value(enc.norms).data().to_vec(),
    };
    let grads = g.backprop(loss.total)?.into_param_grads();
    Ok((breakdown, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn outputs(norms: &[f64]) -> CapsuleOutputs {
        CapsuleOutputs { vectors: norms.iter().map(|&n| vec![n]).collect(), norms: norms.to_vec() }
    }

    #[test]
    fn reference_margin_values() {
        let cfg = MarginLossConfig::default();
        assert_eq!(margin_loss(&outputs(&[0.95, 0.05, 0.05, 0.05, 0.05]), 0, &cfg).unwrap(), 0.0);
        assert_eq!(margin_loss(&outputs(&[0.0; 5]), 2, &cfg).unwrap(), 0.9 * 0.9);
        let l = margin_loss(&outputs(&[0.95, 0.6, 0.05, 0.05, 0.05]), 0, &cfg).unwrap();
        assert_eq!(l, 0.5 * 0.5 * 0.5);
        assert_eq!(l, 0.125);
    }

    #[test]
    fn label_out_of_range() {
        let cfg = MarginLossConfig::default();
        assert!(matches!(
            margin_loss(&outputs(&[0.1; 5]), 5, &cfg),
            Err(Error::LabelOutOfRange { label: 5, classes: 5 })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(MarginLossConfig::default().validate().is_ok());
        let bad = MarginLossConfig { m_minus: 0.95, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = MarginLossConfig { recon_weight: -1.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
