use alloc::vec::Vec;

use super::{Graph, NodeId};
use crate::math::compensated_sum;
use crate::{Error, Result, Tensor};

/// One scalar entry of one parameter tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProbePoint {
    pub tensor: usize,
    pub index: usize,
}

/// Loss value plus the ReLU activation pattern it was computed on.
///
/// `terms` are additive parts of the loss. Central differences are taken per
/// term and then summed, so a small term is not swamped by rounding against
/// a large one.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub loss: f64,
    pub terms: Vec<f64>,
    pub relu_pattern: Vec<bool>,
}

impl Evaluation {
    pub fn from_graph(graph: &Graph<'_>, loss: NodeId) -> Result<Self> {
        let value = graph.value(loss);
        if value.len() != 1 {
            return Err(Error::NonScalarLoss(value.shape().to_vec()));
        }
        Self::from_terms(graph, &[(loss, 1.0)])
    }

    /// Loss given as `Σ_k weight_k · Σ node_k`; every element of every node
    /// becomes one term.
    pub fn from_terms(graph: &Graph<'_>, terms: &[(NodeId, f64)]) -> Result<Self> {
        let terms: Vec<f64> = terms
            .iter()
            .flat_map(|&(id, weight)| graph.value(id).data().iter().map(move |v| weight * v))
            .collect();
        Ok(Self {
            loss: compensated_sum(terms.iter().copied()),
            terms,
            relu_pattern: graph.relu_pattern(),
        })
    }

    fn central_difference(plus: &Self, minus: &Self, step: f64) -> f64 {
        if plus.terms.len() == minus.terms.len() {
            compensated_sum(plus.terms.iter().zip(&minus.terms).map(|(p, m)| p - m)) / (2.0 * step)
        } else {
            (plus.loss - minus.loss) / (2.0 * step)
        }
    }
}

#[derive(Clone, Debug)]
pub struct FdEntry {
    pub point: ProbePoint,
    pub analytic: f64,
    pub numeric: f64,
    /// `None` when the perturbation crossed a ReLU kink (subgradient point).
    pub rel_error: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct FdReport {
    pub entries: Vec<FdEntry>,
    pub max_rel_error: f64,
    pub excluded: usize,
    pub tolerance: f64,
}

impl FdReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }

    pub fn worst(&self) -> Option<&FdEntry> {
        self.entries
            .iter()
            .filter(|e| e.rel_error.is_some())
            .max_by(|a, b| a.rel_error.partial_cmp(&b.rel_error).unwrap())
    }
}

/// Compares analytic gradients against central differences
/// `(L(p+h) − L(p−h)) / 2h` on the given entries.
///
/// Relative error is `|g_ad − g_fd| / max(|g_ad|, |g_fd|, 1e-12)`. An entry is
/// excluded (and counted in `excluded`) when either perturbed evaluation
/// lands on a different ReLU activation pattern than the unperturbed one.
/// `params` is perturbed in place and restored before returning.
pub fn finite_diff_check<F>(
    params: &mut [Tensor],
    analytic: &[Tensor],
    subset: &[ProbePoint],
    step: f64,
    tolerance: f64,
    mut eval: F,
) -> Result<FdReport>
where
    F: FnMut(&[Tensor]) -> Result<Evaluation>,
{
    if !(step > 0.0) {
        return Err(Error::InvalidConfig(alloc::format!("finite-difference step must be > 0, got {step}")));
    }
    let base = eval(params)?;
    let mut entries = Vec::with_capacity(subset.len());
    let mut max_rel_error: f64 = 0.0;
    let mut excluded = 0;
    for &point in subset {
        let original = params[point.tensor].data()[point.index];
        params[point.tensor].data_mut()[point.index] = original + step;
        let plus = eval(params);
        params[point.tensor].data_mut()[point.index] = original - step;
        let minus = eval(params);
        params[point.tensor].data_mut()[point.index] = original;
        let (plus, minus) = (plus?, minus?);

        let numeric = Evaluation::central_difference(&plus, &minus, step);
        let analytic = analytic[point.tensor].data()[point.index];
        let rel_error = if plus.relu_pattern != base.relu_pattern || minus.relu_pattern != base.relu_pattern {
            excluded += 1;
            None
        } else {
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12);
            max_rel_error = max_rel_error.max(err);
            Some(err)
        };
        entries.push(FdEntry { point, analytic, numeric, rel_error });
    }
    Ok(FdReport { entries, max_rel_error, excluded, tolerance })
}
