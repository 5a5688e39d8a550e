use alloc::borrow::Cow;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::conv::ConvGeometry;
use crate::math;
use crate::{Error, Result, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    Conv2d { input: NodeId, kernel: NodeId, geom: ConvGeometry },
    BiasAdd { x: NodeId, bias: NodeId },
    Linear { x: NodeId, weight: NodeId, bias: NodeId },
    Relu(NodeId),
    Sigmoid(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Offset(NodeId),
    Sum(NodeId),
    Reshape(NodeId),
    Norm(NodeId),
    Squash(NodeId),
    Softmax { x: NodeId, axis: usize },
    CapsTransform { u: NodeId, w: NodeId },
    WeightedSum { c: NodeId, uhat: NodeId },
    Agreement { uhat: NodeId, v: NodeId },
    SelectRow { x: NodeId, row: usize },
}

pub(crate) struct Node<'a> {
    pub op: Op,
    pub value: Cow<'a, Tensor>,
    pub needs_grad: bool,
}

/// An eagerly evaluated computation tape.
///
/// Nodes are appended in evaluation order, so insertion order is a
/// topological order and the graph is acyclic by construction. Leaves
/// registered with [`Graph::param`] are the differentiable parameters;
/// everything else is a constant.
pub struct Graph<'a> {
    pub(crate) nodes: Vec<Node<'a>>,
    pub(crate) params: Vec<NodeId>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err<T>(msg: alloc::string::String) -> Result<T> {
    Err(Error::ShapeMismatch(msg))
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), params: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Parameter leaves in registration order.
    pub fn params(&self) -> &[NodeId] {
        &self.params
    }

    fn push(&mut self, op: Op, value: Tensor, inputs: &[NodeId]) -> NodeId {
        let needs_grad = inputs.iter().any(|i| self.nodes[i.0].needs_grad);
        self.nodes.push(Node { op, value: Cow::Owned(value), needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node { op: Op::Leaf, value: Cow::Owned(value), needs_grad: false });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant_ref(&mut self, value: &'a Tensor) -> NodeId {
        self.nodes.push(Node { op: Op::Leaf, value: Cow::Borrowed(value), needs_grad: false });
        NodeId(self.nodes.len() - 1)
    }

    /// Registers a differentiable parameter leaf (borrowed, not copied).
    pub fn param(&mut self, value: &'a Tensor) -> NodeId {
        self.nodes.push(Node { op: Op::Leaf, value: Cow::Borrowed(value), needs_grad: true });
        let id = NodeId(self.nodes.len() - 1);
        self.params.push(id);
        id
    }

    /// Owned variant of [`Graph::param`].
    pub fn param_owned(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node { op: Op::Leaf, value: Cow::Owned(value), needs_grad: true });
        let id = NodeId(self.nodes.len() - 1);
        self.params.push(id);
        id
    }

    /// Valid cross-correlation of `[H,W,Cin]` with `[K,K,Cin,Cout]`.
    pub fn conv2d(&mut self, input: NodeId, kernel: NodeId, stride: usize) -> Result<NodeId> {
        let geom = ConvGeometry::new(self.value(input).shape(), self.value(kernel).shape(), stride)?;
        let out = geom.forward(self.value(input).data(), self.value(kernel).data());
        let value = Tensor::from_parts(geom.out_shape(), out);
        Ok(self.push(Op::Conv2d { input, kernel, geom }, value, &[input, kernel]))
    }

    /// Adds `bias[C]` along the last axis of `x[..., C]`.
    pub fn bias_add(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (xv, bv) = (self.value(x), self.value(bias));
        let c = *xv.shape().last().unwrap();
        if bv.shape() != [c] {
            return shape_err(format!("bias {:?} does not match channels of {:?}", bv.shape(), xv.shape()));
        }
        let mut data = xv.data().to_vec();
        for chunk in data.chunks_mut(c) {
            for (v, b) in chunk.iter_mut().zip(bv.data()) {
                *v += b;
            }
        }
        let value = Tensor::from_parts(xv.shape().to_vec(), data);
        Ok(self.push(Op::BiasAdd { x, bias }, value, &[x, bias]))
    }

    /// Affine map `x[n] · W[n,m] + b[m]`.
    pub fn linear(&mut self, x: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let (xv, wv, bv) = (self.value(x), self.value(weight), self.value(bias));
        let (&[n], &[wn, m]) = (xv.shape(), wv.shape()) else {
            return shape_err(format!("linear wants x[n], W[n,m]; got {:?}, {:?}", xv.shape(), wv.shape()));
        };
        if wn != n || bv.shape() != [m] {
            return shape_err(format!(
                "linear shapes x{:?} W{:?} b{:?} disagree",
                xv.shape(),
                wv.shape(),
                bv.shape()
            ));
        }
        let mut out = bv.data().to_vec();
        for (xi, row) in xv.data().iter().zip(wv.data().chunks_exact(m)) {
            if *xi != 0.0 {
                for (o, w) in out.iter_mut().zip(row) {
                    *o += xi * w;
                }
            }
        }
        let value = Tensor::from_parts(vec![m], out);
        Ok(self.push(Op::Linear { x, weight, bias }, value, &[x, weight, bias]))
    }

    fn map(&mut self, x: NodeId, op: Op, f: impl Fn(f64) -> f64) -> NodeId {
        let xv = self.value(x);
        let value = Tensor::from_parts(xv.shape().to_vec(), xv.data().iter().map(|&v| f(v)).collect());
        self.push(op, value, &[x])
    }

    /// ReLU; the subgradient at exactly 0 is 0.
    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.map(x, Op::Relu(x), |v| if v > 0.0 { v } else { 0.0 })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.map(x, Op::Sigmoid(x), |v| 1.0 / (1.0 + math::exp(-v)))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        self.map(x, Op::Scale(x, factor), |v| v * factor)
    }

    /// Adds a scalar constant to every element.
    pub fn offset(&mut self, x: NodeId, shift: f64) -> NodeId {
        self.map(x, Op::Offset(x), |v| v + shift)
    }

    fn zip(&mut self, a: NodeId, b: NodeId, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return shape_err(format!("elementwise op on {:?} and {:?}", av.shape(), bv.shape()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::from_parts(av.shape().to_vec(), data);
        Ok(self.push(op, value, &[a, b]))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Sum of all elements, as a one-element tensor.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = crate::math::compensated_sum(self.value(x).data().iter().copied());
        self.push(Op::Sum(x), Tensor::scalar(s), &[x])
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let value = self.value(x).reshape(shape)?;
        Ok(self.push(Op::Reshape(x), value, &[x]))
    }

    fn reduced_shape(shape: &[usize]) -> Vec<usize> {
        if shape.len() <= 1 {
            vec![1]
        } else {
            shape[..shape.len() - 1].to_vec()
        }
    }

    /// Euclidean norm over the last axis. Gradient at the zero vector is 0.
    pub fn norm(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let d = *xv.shape().last().unwrap();
        let data = xv.data().chunks_exact(d).map(math::l2_norm).collect();
        let value = Tensor::from_parts(Self::reduced_shape(xv.shape()), data);
        self.push(Op::Norm(x), value, &[x])
    }

    /// Capsule squashing over the last axis: `s · ‖s‖ / (1 + ‖s‖²)`.
    pub fn squash(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let d = *xv.shape().last().unwrap();
        let mut data = xv.data().to_vec();
        for chunk in data.chunks_exact_mut(d) {
            let n = math::l2_norm(chunk);
            let f = n / (1.0 + n * n);
            chunk.iter_mut().for_each(|v| *v *= f);
        }
        let value = Tensor::from_parts(xv.shape().to_vec(), data);
        self.push(Op::Squash(x), value, &[x])
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        let xv = self.value(x);
        if axis >= xv.rank() {
            return shape_err(format!("softmax axis {axis} out of range for {:?}", xv.shape()));
        }
        let (outer, len, inner) = axis_split(xv.shape(), axis);
        let mut data = xv.data().to_vec();
        for o in 0..outer {
            for i in 0..inner {
                let idx = |k: usize| (o * len + k) * inner + i;
                let max = (0..len).map(|k| data[idx(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for k in 0..len {
                    let e = math::exp(data[idx(k)] - max);
                    data[idx(k)] = e;
                    total += e;
                }
                for k in 0..len {
                    data[idx(k)] /= total;
                }
            }
        }
        let value = Tensor::from_parts(xv.shape().to_vec(), data);
        Ok(self.push(Op::Softmax { x, axis }, value, &[x]))
    }

    /// Per-pair capsule predictions `û[i,j] = W[i,j] · u[i]`, with
    /// `u: [I, Din]` and `W: [I, J, Dout, Din]`, giving `[I, J, Dout]`.
    pub fn caps_transform(&mut self, u: NodeId, w: NodeId) -> Result<NodeId> {
        let (uv, wv) = (self.value(u), self.value(w));
        let (&[ni, din], &[wi, nj, dout, wdin]) = (uv.shape(), wv.shape()) else {
            return shape_err(format!("caps_transform wants u[I,D], W[I,J,O,D]; got {:?}, {:?}", uv.shape(), wv.shape()));
        };
        if wi != ni || wdin != din {
            return shape_err(format!("caps_transform u{:?} and W{:?} disagree", uv.shape(), wv.shape()));
        }
        let mut out = vec![0.0; ni * nj * dout];
        let (ud, wd) = (uv.data(), wv.data());
        for i in 0..ni {
            let ui = &ud[i * din..(i + 1) * din];
            for (o, row) in out[i * nj * dout..(i + 1) * nj * dout]
                .iter_mut()
                .zip(wd[i * nj * dout * din..].chunks_exact(din))
            {
                *o = row.iter().zip(ui).map(|(a, b)| a * b).sum();
            }
        }
        let value = Tensor::from_parts(vec![ni, nj, dout], out);
        Ok(self.push(Op::CapsTransform { u, w }, value, &[u, w]))
    }

    /// Routing-weighted sum `s[j] = Σ_i c[i,j] · û[i,j]`, with `c: [I,J]`,
    /// `û: [I,J,D]`, giving `[J,D]`.
    pub fn weighted_sum(&mut self, c: NodeId, uhat: NodeId) -> Result<NodeId> {
        let (cv, uv) = (self.value(c), self.value(uhat));
        let (&[ni, nj], &[ui, uj, d]) = (cv.shape(), uv.shape()) else {
            return shape_err(format!("weighted_sum wants c[I,J], û[I,J,D]; got {:?}, {:?}", cv.shape(), uv.shape()));
        };
        if (ni, nj) != (ui, uj) {
            return shape_err(format!("weighted_sum c{:?} and û{:?} disagree", cv.shape(), uv.shape()));
        }
        let mut out = vec![0.0; nj * d];
        for i in 0..ni {
            for j in 0..nj {
                let cij = cv.data()[i * nj + j];
                let src = &uv.data()[(i * nj + j) * d..][..d];
                for (o, s) in out[j * d..(j + 1) * d].iter_mut().zip(src) {
                    *o += cij * s;
                }
            }
        }
        let value = Tensor::from_parts(vec![nj, d], out);
        Ok(self.push(Op::WeightedSum { c, uhat }, value, &[c, uhat]))
    }

    /// Routing agreement `a[i,j] = û[i,j] · v[j]`, giving `[I,J]`.
    pub fn agreement(&mut self, uhat: NodeId, v: NodeId) -> Result<NodeId> {
        let (uv, vv) = (self.value(uhat), self.value(v));
        let (&[ni, nj, d], &[vj, vd]) = (uv.shape(), vv.shape()) else {
            return shape_err(format!("agreement wants û[I,J,D], v[J,D]; got {:?}, {:?}", uv.shape(), vv.shape()));
        };
        if (nj, d) != (vj, vd) {
            return shape_err(format!("agreement û{:?} and v{:?} disagree", uv.shape(), vv.shape()));
        }
        let mut out = vec![0.0; ni * nj];
        for i in 0..ni {
            for j in 0..nj {
                let a = &uv.data()[(i * nj + j) * d..][..d];
                let b = &vv.data()[j * d..][..d];
                out[i * nj + j] = a.iter().zip(b).map(|(x, y)| x * y).sum();
            }
        }
        let value = Tensor::from_parts(vec![ni, nj], out);
        Ok(self.push(Op::Agreement { uhat, v }, value, &[uhat, v]))
    }

    /// Row `row` of a `[R, D]` matrix, as `[D]`.
    pub fn select_row(&mut self, x: NodeId, row: usize) -> Result<NodeId> {
        let xv = self.value(x);
        let &[r, d] = xv.shape() else {
            return shape_err(format!("select_row wants [R,D], got {:?}", xv.shape()));
        };
        if row >= r {
            return shape_err(format!("row {row} out of range for {r} rows"));
        }
        let value = Tensor::from_parts(vec![d], xv.data()[row * d..(row + 1) * d].to_vec());
        Ok(self.push(Op::SelectRow { x, row }, value, &[x]))
    }

    /// Activation pattern (`input > 0`) of every ReLU in the tape. Two
    /// evaluations with equal patterns lie on the same linear piece of every
    /// ReLU, which is what finite-difference checks rely on.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Op::Relu(x) = node.op {
                out.extend(self.value(x).data().iter().map(|&v| v > 0.0));
            }
        }
        out
    }

    /// True when some ReLU input sits exactly on its kink.
    pub fn touches_relu_kink(&self) -> bool {
        self.nodes.iter().any(|node| match node.op {
            Op::Relu(x) => self.value(x).data().contains(&0.0),
            _ => false,
        })
    }
}

/// `(outer, axis_len, inner)` extents around `axis` of a row-major shape.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}
