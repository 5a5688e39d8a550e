use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::{Graph, NodeId};
use crate::math::l2_norm;
use crate::{Error, Result, Tensor};

/// `v = (‖s‖² / (1 + ‖s‖²)) · s / ‖s‖`, with `squash(0) = 0`.
pub fn squash(s: &[f64]) -> Vec<f64> {
    let n = l2_norm(s);
    let f = n / (1.0 + n * n);
    s.iter().map(|v| v * f).collect()
}

/// Graph nodes produced by one routing pass.
#[derive(Clone, Debug)]
pub struct Routing {
    /// Squashed parent capsules `[J, D]`.
    pub outputs: NodeId,
    /// Coupling coefficients `[I, J]` used in each iteration.
    pub couplings: Vec<NodeId>,
    /// Routing logits `[I, J]` after the last agreement update.
    pub logits: NodeId,
    /// Unsquashed weighted sums `[J, D]` of the final iteration.
    pub weighted_sums: NodeId,
}

/// Routing-by-agreement over predictions `û: [I, J, D]`.
///
/// Logits start at 0. Each iteration takes `c = softmax_j(b)`,
/// `s_j = Σ_i c_ij û_j|i`, `v_j = squash(s_j)` and, except after the last
/// iteration, adds the agreement `û_j|i · v_j` to `b_ij`. Gradients flow
/// through every iteration.
pub fn dynamic_routing(g: &mut Graph<'_>, predictions: NodeId, iterations: usize) -> Result<Routing> {
    if iterations == 0 {
        return Err(Error::InvalidConfig("routing needs at least one iteration".into()));
    }
    let &[children, parents, _] = g.value(predictions).shape() else {
        return Err(Error::ShapeMismatch(format!(
            "routing predictions must be [I,J,D], got {:?}",
            g.value(predictions).shape()
        )));
    };
    let mut logits = g.constant(Tensor::zeros(&[children, parents]));
    let mut couplings = Vec::with_capacity(iterations);
    let mut step = None;
    for it in 0..iterations {
        let c = g.softmax(logits, 1)?;
        couplings.push(c);
        let s = g.weighted_sum(c, predictions)?;
        let v = g.squash(s);
        step = Some((s, v));
        if it + 1 < iterations {
            let agreement = g.agreement(predictions, v)?;
            logits = g.add(logits, agreement)?;
        }
    }
    let (weighted_sums, outputs) = step.expect("at least one iteration");
    Ok(Routing { outputs, couplings, logits, weighted_sums })
}

/// Materialized routing state, for inspection outside a training graph.
#[derive(Clone, Debug, PartialEq)]
pub struct RoutingState {
    pub predictions: Tensor,
    pub logits: Tensor,
    /// Couplings of every iteration, first to last.
    pub coupling_history: Vec<Tensor>,
    pub weighted_sums: Tensor,
    pub outputs: Tensor,
}

impl RoutingState {
    pub fn couplings(&self) -> &Tensor {
        self.coupling_history.last().expect("at least one iteration")
    }
}

/// Runs [`dynamic_routing`] on a standalone prediction tensor.
pub fn route(predictions: &Tensor, iterations: usize) -> Result<RoutingState> {
    let mut g = Graph::new();
    let u = g.constant_ref(predictions);
    let r = dynamic_routing(&mut g, u, iterations)?;
    Ok(RoutingState {
        predictions: predictions.clone(),
        logits: g.value(r.logits).clone(),
        coupling_history: r.couplings.iter().map(|&c| g.value(c).clone()).collect(),
        weighted_sums: g.value(r.weighted_sums).clone(),
        outputs: g.value(r.outputs).clone(),
    })
}
