use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::loss::MarginLossConfig;
use super::routing::{dynamic_routing, Routing};
use super::{ModelParams, ParamSlot};
use crate::autodiff::{Graph, NodeId};
use crate::dsp::ModelInput;
use crate::math::argmax;
use crate::{Error, Result, Tensor};

/// Language capsule vectors and their lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct CapsuleOutputs {
    pub vectors: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
}

impl CapsuleOutputs {
    /// From a `[J, D]` tensor of parent capsules.
    pub fn from_tensor(lang: &Tensor) -> Self {
        let d = lang.shape()[1];
        let vectors: Vec<Vec<f64>> = lang.data().chunks_exact(d).map(<[f64]>::to_vec).collect();
        let norms = vectors.iter().map(|v| crate::math::l2_norm(v)).collect();
        Self { vectors, norms }
    }

    pub fn predicted(&self) -> usize {
        argmax(&self.norms)
    }
}

/// Classification result: the longest language capsule wins, lowest index on
/// exact ties. `is_non_class` is only ever set by out-of-set detection.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Prediction {
    pub label: usize,
    pub norms: Vec<f64>,
    pub is_non_class: bool,
}

impl Prediction {
    pub fn from_norms(norms: Vec<f64>) -> Self {
        Self { label: argmax(&norms), norms, is_non_class: false }
    }

    pub fn label_norm(&self) -> f64 {
        self.norms[self.label]
    }
}

/// Node handles of one encoder pass.
#[derive(Clone, Debug)]
pub struct EncoderNodes {
    /// One node per [`ParamSlot`], in slot order.
    pub params: Vec<NodeId>,
    pub input: NodeId,
    pub conv1: NodeId,
    /// Squashed primary capsules `[N, primary_dim]`.
    pub primary_caps: NodeId,
    pub mid_routing: Routing,
    pub lang_routing: Routing,
    /// Language capsules `[lang_caps, lang_dim]`.
    pub lang: NodeId,
    /// Language capsule lengths `[lang_caps]`.
    pub norms: NodeId,
}

impl EncoderNodes {
    pub fn param(&self, slot: ParamSlot) -> NodeId {
        self.params[slot.index()]
    }
}

fn check_input(params: &ModelParams, input: &Tensor) -> Result<()> {
    let c = params.config();
    input
        .expect_shape(&[c.input_rows, c.input_cols, 1])
        .map_err(|e| Error::ShapeMismatch(format!("model input: {e}")))
}

/// Records the encoder on `g`. With `trainable` the parameters become
/// differentiable leaves, otherwise constants.
pub fn build_encoder<'a>(
    g: &mut Graph<'a>,
    params: &'a ModelParams,
    input: &Tensor,
    trainable: bool,
) -> Result<EncoderNodes> {
    check_input(params, input)?;
    let c = *params.config();
    let ids: Vec<NodeId> = params
        .tensors()
        .iter()
        .map(|t| if trainable { g.param(t) } else { g.constant_ref(t) })
        .collect();
    let p = |slot: ParamSlot| ids[slot.index()];

    let x = g.constant(input.clone());
    let conv1 = g.conv2d(x, p(ParamSlot::Conv1Weight), 1)?;
    let conv1 = g.bias_add(conv1, p(ParamSlot::Conv1Bias))?;
    let conv1 = g.relu(conv1);

    let primary = g.conv2d(conv1, p(ParamSlot::PrimaryWeight), c.primary_stride)?;
    let primary = g.bias_add(primary, p(ParamSlot::PrimaryBias))?;
    let primary = g.reshape(primary, &[c.num_primary_caps(), c.primary_dim])?;
    let primary_caps = g.squash(primary);

    let mid_pred = g.caps_transform(primary_caps, p(ParamSlot::MidTransform))?;
    let mid_routing = dynamic_routing(g, mid_pred, c.routing_iterations)?;
    let lang_pred = g.caps_transform(mid_routing.outputs, p(ParamSlot::LangTransform))?;
    let lang_routing = dynamic_routing(g, lang_pred, c.routing_iterations)?;
    let lang = lang_routing.outputs;
    let norms = g.norm(lang);

    Ok(EncoderNodes { params: ids, input: x, conv1, primary_caps, mid_routing, lang_routing, lang, norms })
}

/// Three affine layers (ReLU, ReLU, sigmoid) from a capsule vector to a
/// flattened image.
fn build_decoder(g: &mut Graph<'_>, enc: &EncoderNodes, capsule: NodeId) -> Result<NodeId> {
    let h = g.linear(capsule, enc.param(ParamSlot::Decoder1Weight), enc.param(ParamSlot::Decoder1Bias))?;
    let h = g.relu(h);
    let h = g.linear(h, enc.param(ParamSlot::Decoder2Weight), enc.param(ParamSlot::Decoder2Bias))?;
    let h = g.relu(h);
    let out = g.linear(h, enc.param(ParamSlot::Decoder3Weight), enc.param(ParamSlot::Decoder3Bias))?;
    Ok(g.sigmoid(out))
}

/// Node handles of the training objective.
#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    pub margin: NodeId,
    /// Flattened reconstruction of the input from the true-label capsule.
    pub reconstruction: NodeId,
    /// Per-pixel squared reconstruction errors.
    pub squared_errors: NodeId,
    /// Sum of squared reconstruction errors (unweighted).
    pub reconstruction_error: NodeId,
    /// `recon_weight · reconstruction_error`.
    pub weighted_reconstruction: NodeId,
    /// `margin + weighted_reconstruction`.
    pub total: NodeId,
}

/// Records margin loss plus weighted reconstruction error on top of an encoder.
pub fn build_training_loss(
    g: &mut Graph<'_>,
    enc: &EncoderNodes,
    label: usize,
    cfg: &MarginLossConfig,
) -> Result<LossNodes> {
    cfg.validate()?;
    let classes = g.value(enc.norms).len();
    if label >= classes {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    let present = Tensor::from_fn(&[classes], |c| if c == label { 1.0 } else { 0.0 });
    let absent = Tensor::from_fn(&[classes], |c| if c == label { 0.0 } else { cfg.lambda });

    // T_c · max(0, m⁺ − ‖v_c‖)² + λ(1 − T_c) · max(0, ‖v_c‖ − m⁻)²
    let neg = g.scale(enc.norms, -1.0);
    let short = g.offset(neg, cfg.m_plus);
    let short = g.relu(short);
    let short_sq = g.mul(short, short)?;
    let long = g.offset(enc.norms, -cfg.m_minus);
    let long = g.relu(long);
    let long_sq = g.mul(long, long)?;
    let present = g.constant(present);
    let absent = g.constant(absent);
    let a = g.mul(present, short_sq)?;
    let b = g.mul(absent, long_sq)?;
    let per_class = g.add(a, b)?;
    let margin = g.sum(per_class);

    let capsule = g.select_row(enc.lang, label)?;
    let reconstruction = build_decoder(g, enc, capsule)?;
    let len = g.value(enc.input).len();
    let target = g.reshape(enc.input, &[len])?;
    let diff = g.sub(reconstruction, target)?;
    let sq = g.mul(diff, diff)?;
    let reconstruction_error = g.sum(sq);
    let weighted = g.scale(reconstruction_error, cfg.recon_weight);
    let total = g.add(margin, weighted)?;
    Ok(LossNodes { margin, reconstruction, squared_errors: sq, reconstruction_error, weighted_reconstruction: weighted, total })
}

fn input_tensor(params: &ModelParams, input: &ModelInput) -> Result<Tensor> {
    let t = input.to_tensor();
    check_input(params, &t)?;
    Ok(t)
}

/// Encoder pass: the language capsules of one input.
pub fn forward(params: &ModelParams, input: &ModelInput) -> Result<CapsuleOutputs> {
    let x = input_tensor(params, input)?;
    let mut g = Graph::new();
    let enc = build_encoder(&mut g, params, &x, false)?;
    Ok(CapsuleOutputs::from_tensor(g.value(enc.lang)))
}

/// Classifies by the longest language capsule.
pub fn predict(params: &ModelParams, input: &ModelInput) -> Result<Prediction> {
    Ok(Prediction::from_norms(forward(params, input)?.norms))
}

/// Decodes one language capsule vector into a flattened `rows × cols` image.
pub fn reconstruct(lang_vector: &[f64], params: &ModelParams) -> Result<Vec<f64>> {
    let c = params.config();
    if lang_vector.len() != c.lang_dim {
        return Err(Error::ShapeMismatch(format!(
            "decoder wants a {}-dim capsule, got {}",
            c.lang_dim,
            lang_vector.len()
        )));
    }
    let mut g = Graph::new();
    let ids: Vec<NodeId> = params.tensors().iter().map(|t| g.constant_ref(t)).collect();
    let p = |slot: ParamSlot| ids[slot.index()];
    let v = g.constant(Tensor::from_parts(vec![c.lang_dim], lang_vector.to_vec()));
    let h = g.linear(v, p(ParamSlot::Decoder1Weight), p(ParamSlot::Decoder1Bias))?;
    let h = g.relu(h);
    let h = g.linear(h, p(ParamSlot::Decoder2Weight), p(ParamSlot::Decoder2Bias))?;
    let h = g.relu(h);
    let out = g.linear(h, p(ParamSlot::Decoder3Weight), p(ParamSlot::Decoder3Bias))?;
    let out = g.sigmoid(out);
    Ok(g.value(out).data().to_vec())
}
