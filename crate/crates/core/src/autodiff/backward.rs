use alloc::vec;
use alloc::vec::Vec;

use super::graph::{axis_split, Graph, NodeId, Op};
use crate::{Error, Result, Tensor};

/// Gradients of a scalar loss with respect to every node that needed one.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<NodeId>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient of every parameter in registration order. Parameters the
    /// loss does not depend on get zeros.
    pub fn into_param_grads(mut self) -> Vec<Tensor> {
        self.params
            .iter()
            .zip(&self.shapes)
            .map(|(id, shape)| self.grads[id.0].take().unwrap_or_else(|| Tensor::zeros(shape)))
            .collect()
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, contribution: Tensor) {
    match &mut grads[id.0] {
        Some(existing) => {
            for (a, b) in existing.data_mut().iter_mut().zip(contribution.data()) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(contribution),
    }
}

impl Graph<'_> {
    /// Reverse-mode sweep from a one-element `loss` node.
    pub fn backprop(&self, loss: NodeId) -> Result<Gradients> {
        let loss_value = self.value(loss);
        if loss_value.len() != 1 {
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::filled(loss_value.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let needs = |id: NodeId| self.nodes[id.0].needs_grad;
            let val = |id: NodeId| self.value(id);
            let like = |id: NodeId, data: Vec<f64>| Tensor::from_parts(val(id).shape().to_vec(), data);
            let gd = g.data();

            match node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Conv2d { input, kernel, geom } => {
                    let (gi, gk) = geom.backward(
                        val(input).data(),
                        val(kernel).data(),
                        gd,
                        needs(input),
                        needs(kernel),
                    );
                    if let Some(gi) = gi {
                        accumulate(&mut grads, input, like(input, gi));
                    }
                    if let Some(gk) = gk {
                        accumulate(&mut grads, kernel, like(kernel, gk));
                    }
                }
                Op::BiasAdd { x, bias } => {
                    if needs(bias) {
                        let c = val(bias).len();
                        let mut gb = vec![0.0; c];
                        for chunk in gd.chunks_exact(c) {
                            for (b, v) in gb.iter_mut().zip(chunk) {
                                *b += v;
                            }
                        }
                        accumulate(&mut grads, bias, like(bias, gb));
                    }
                    if needs(x) {
                        accumulate(&mut grads, x, g.clone());
                    }
                }
                Op::Linear { x, weight, bias } => {
                    let m = val(bias).len();
                    if needs(x) {
                        let gx = val(weight)
                            .data()
                            .chunks_exact(m)
                            .map(|row| row.iter().zip(gd).map(|(w, d)| w * d).sum())
                            .collect();
                        accumulate(&mut grads, x, like(x, gx));
                    }
                    if needs(weight) {
                        let mut gw = Vec::with_capacity(val(weight).len());
                        for &xi in val(x).data() {
                            gw.extend(gd.iter().map(|d| xi * d));
                        }
                        accumulate(&mut grads, weight, like(weight, gw));
                    }
                    if needs(bias) {
                        accumulate(&mut grads, bias, g.clone());
                    }
                }
                Op::Relu(x) => {
                    let gx = val(x)
                        .data()
                        .iter()
                        .zip(gd)
                        .map(|(&v, &d)| if v > 0.0 { d } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, x, like(x, gx));
                }
                Op::Sigmoid(x) => {
                    let gx = node.value.data().iter().zip(gd).map(|(y, d)| y * (1.0 - y) * d).collect();
                    accumulate(&mut grads, x, like(x, gx));
                }
                Op::Add(a, b) => {
                    if needs(a) {
                        accumulate(&mut grads, a, g.clone());
                    }
                    if needs(b) {
                        accumulate(&mut grads, b, g.clone());
                    }
                }
                Op::Sub(a, b) => {
                    if needs(a) {
                        accumulate(&mut grads, a, g.clone());
                    }
                    if needs(b) {
                        accumulate(&mut grads, b, like(b, gd.iter().map(|d| -d).collect()));
                    }
                }
                Op::Mul(a, b) => {
                    if needs(a) {
                        let ga = gd.iter().zip(val(b).data()).map(|(d, y)| d * y).collect();
                        accumulate(&mut grads, a, like(a, ga));
                    }
                    if needs(b) {
                        let gb = gd.iter().zip(val(a).data()).map(|(d, x)| d * x).collect();
                        accumulate(&mut grads, b, like(b, gb));
                    }
                }
                Op::Scale(x, factor) => {
                    accumulate(&mut grads, x, like(x, gd.iter().map(|d| d * factor).collect()));
                }
                Op::Offset(x) => accumulate(&mut grads, x, g.clone()),
                Op::Sum(x) => {
                    accumulate(&mut grads, x, Tensor::filled(val(x).shape(), gd[0]));
                }
                Op::Reshape(x) => accumulate(&mut grads, x, like(x, gd.to_vec())),
                Op::Norm(x) => {
                    let xv = val(x);
                    let d = *xv.shape().last().unwrap();
                    let mut gx = vec![0.0; xv.len()];
                    for ((dst, src), (&n, &up)) in gx
                        .chunks_exact_mut(d)
                        .zip(xv.data().chunks_exact(d))
                        .zip(node.value.data().iter().zip(gd))
                    {
                        if n > 0.0 {
                            for (o, s) in dst.iter_mut().zip(src) {
                                *o = up * s / n;
                            }
                        }
                    }
                    accumulate(&mut grads, x, like(x, gx));
                }
                Op::Squash(x) => {
                    // v = f(n)·s with f(n) = n/(1+n²):
                    // ds = f·g + s·(f'(n)/n)·(s·g), f'(n) = (1−n²)/(1+n²)².
                    let xv = val(x);
                    let d = *xv.shape().last().unwrap();
                    let mut gx = vec![0.0; xv.len()];
                    for ((dst, s), up) in gx
                        .chunks_exact_mut(d)
                        .zip(xv.data().chunks_exact(d))
                        .zip(gd.chunks_exact(d))
                    {
                        let n2: f64 = s.iter().map(|v| v * v).sum();
                        if n2 == 0.0 {
                            continue;
                        }
                        let n = crate::math::sqrt(n2);
                        let denom = 1.0 + n2;
                        let f = n / denom;
                        let coeff = (1.0 - n2) / (n * denom * denom);
                        let dot: f64 = s.iter().zip(up).map(|(a, b)| a * b).sum();
                        for ((o, sv), u) in dst.iter_mut().zip(s).zip(up) {
                            *o = f * u + coeff * dot * sv;
                        }
                    }
                    accumulate(&mut grads, x, like(x, gx));
                }
                Op::Softmax { x, axis } => {
                    let y = node.value.data();
                    let (outer, len, inner) = axis_split(node.value.shape(), axis);
                    let mut gx = vec![0.0; y.len()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let idx = |k: usize| (o * len + k) * inner + i;
                            let dot: f64 = (0..len).map(|k| y[idx(k)] * gd[idx(k)]).sum();
                            for k in 0..len {
                                gx[idx(k)] = y[idx(k)] * (gd[idx(k)] - dot);
                            }
                        }
                    }
                    accumulate(&mut grads, x, like(x, gx));
                }
                Op::CapsTransform { u, w } => {
                    let (uv, wv) = (val(u), val(w));
                    let (ni, din) = (uv.shape()[0], uv.shape()[1]);
                    let (nj, dout) = (wv.shape()[1], wv.shape()[2]);
                    let block = nj * dout;
                    if needs(w) {
                        let mut gw = vec![0.0; wv.len()];
                        for i in 0..ni {
                            let ui = &uv.data()[i * din..(i + 1) * din];
                            for (row, &up) in gw[i * block * din..(i + 1) * block * din]
                                .chunks_exact_mut(din)
                                .zip(&gd[i * block..(i + 1) * block])
                            {
                                for (o, x) in row.iter_mut().zip(ui) {
                                    *o = up * x;
                                }
                            }
                        }
                        accumulate(&mut grads, w, like(w, gw));
                    }
                    if needs(u) {
                        let mut gu = vec![0.0; uv.len()];
                        for i in 0..ni {
                            let dst = &mut gu[i * din..(i + 1) * din];
                            for (row, &up) in wv.data()[i * block * din..(i + 1) * block * din]
                                .chunks_exact(din)
                                .zip(&gd[i * block..(i + 1) * block])
                            {
                                for (o, wk) in dst.iter_mut().zip(row) {
                                    *o += up * wk;
                                }
                            }
                        }
                        accumulate(&mut grads, u, like(u, gu));
                    }
                }
                Op::WeightedSum { c, uhat } => {
                    let (cv, uv) = (val(c), val(uhat));
                    let (ni, nj, d) = (uv.shape()[0], uv.shape()[1], uv.shape()[2]);
                    if needs(c) {
                        let mut gc = vec![0.0; ni * nj];
                        for i in 0..ni {
                            for j in 0..nj {
                                let src = &uv.data()[(i * nj + j) * d..][..d];
                                gc[i * nj + j] = src.iter().zip(&gd[j * d..(j + 1) * d]).map(|(a, b)| a * b).sum();
                            }
                        }
                        accumulate(&mut grads, c, like(c, gc));
                    }
                    if needs(uhat) {
                        let mut gu = vec![0.0; uv.len()];
                        for i in 0..ni {
                            for j in 0..nj {
                                let cij = cv.data()[i * nj + j];
                                for (o, up) in gu[(i * nj + j) * d..][..d].iter_mut().zip(&gd[j * d..(j + 1) * d]) {
                                    *o = cij * up;
                                }
                            }
                        }
                        accumulate(&mut grads, uhat, like(uhat, gu));
                    }
                }
                Op::Agreement { uhat, v } => {
                    let (uv, vv) = (val(uhat), val(v));
                    let (ni, nj, d) = (uv.shape()[0], uv.shape()[1], uv.shape()[2]);
                    if needs(uhat) {
                        let mut gu = vec![0.0; uv.len()];
                        for i in 0..ni {
                            for j in 0..nj {
                                let a = gd[i * nj + j];
                                for (o, vk) in gu[(i * nj + j) * d..][..d].iter_mut().zip(&vv.data()[j * d..(j + 1) * d]) {
                                    *o = a * vk;
                                }
                            }
                        }
                        accumulate(&mut grads, uhat, like(uhat, gu));
                    }
                    if needs(v) {
                        let mut gv = vec![0.0; vv.len()];
                        for i in 0..ni {
                            for j in 0..nj {
                                let a = gd[i * nj + j];
                                for (o, u) in gv[j * d..(j + 1) * d].iter_mut().zip(&uv.data()[(i * nj + j) * d..][..d]) {
                                    *o += a * u;
                                }
                            }
                        }
                        accumulate(&mut grads, v, like(v, gv));
                    }
                }
                Op::SelectRow { x, row } => {
                    let xv = val(x);
                    let d = xv.shape()[1];
                    let mut gx = vec![0.0; xv.len()];
                    gx[row * d..(row + 1) * d].copy_from_slice(gd);
                    accumulate(&mut grads, x, like(x, gx));
                }
            }
        }

        let shapes = self.params.iter().map(|id| self.value(*id).shape().to_vec()).collect();
        Ok(Gradients { grads, params: self.params.clone(), shapes })
    }
}
