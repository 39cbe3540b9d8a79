use std::fmt;

use super::kernels::{self, ConvGeometry};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Identity of a value inside one [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Parameter,
    Constant,
    Dense,
    Conv2d,
    Relu,
    Sigmoid,
    Log,
    Mean,
    MaxPool2,
    Reshape,
    Clamp,
    Add,
    Sub,
    Mul,
    Affine,
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Parameter,
    Constant,
    Dense { x: NodeId, w: NodeId, b: NodeId },
    Conv2d { x: NodeId, kernel: NodeId, stride: usize },
    Relu(NodeId),
    Sigmoid(NodeId),
    Log(NodeId),
    Mean(NodeId),
    MaxPool2 { x: NodeId, argmax: Vec<usize> },
    Reshape(NodeId),
    Clamp { x: NodeId, lo: T, hi: T },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Affine { x: NodeId, scale: T, shift: T },
}

impl<T> Op<T> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Parameter => OpKind::Parameter,
            Op::Constant => OpKind::Constant,
            Op::Dense { .. } => OpKind::Dense,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::Relu(_) => OpKind::Relu,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::Log(_) => OpKind::Log,
            Op::Mean(_) => OpKind::Mean,
            Op::MaxPool2 { .. } => OpKind::MaxPool2,
            Op::Reshape(_) => OpKind::Reshape,
            Op::Clamp { .. } => OpKind::Clamp,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Affine { .. } => OpKind::Affine,
        }
    }

    fn inputs(&self) -> Vec<NodeId> {
        match *self {
            Op::Parameter | Op::Constant => vec![],
            Op::Dense { x, w, b } => vec![x, w, b],
            Op::Conv2d { x, kernel, .. } => vec![x, kernel],
            Op::Relu(x) | Op::Sigmoid(x) | Op::Log(x) | Op::Mean(x) | Op::Reshape(x) => vec![x],
            Op::MaxPool2 { x, .. } | Op::Clamp { x, .. } | Op::Affine { x, .. } => vec![x],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![a, b],
        }
    }
}

#[derive(Clone, Debug)]
struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
}

/// One recorded operation, as exposed by [`Graph::records`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub kind: OpKind,
    pub inputs: Vec<NodeId>,
    pub output: NodeId,
}

/// Append-only tape of tensor operations. Node ids are positions on the
/// tape, so every input precedes the node that consumes it.
#[derive(Clone, Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that receives a gradient.
    pub fn parameter(&mut self, value: Tensor<T>) -> NodeId {
        self.push(Op::Parameter, value)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(Op::Constant, value)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn kind(&self, id: NodeId) -> OpKind {
        self.nodes[id.0].op.kind()
    }

    pub fn records(&self) -> impl Iterator<Item = Record> + '_ {
        self.nodes.iter().enumerate().map(|(i, n)| Record {
            kind: n.op.kind(),
            inputs: n.op.inputs(),
            output: NodeId(i),
        })
    }

    pub fn dense(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Dense { x, w, b })
    }

    pub fn conv2d(&mut self, x: NodeId, kernel: NodeId, stride: usize) -> Result<NodeId> {
        self.apply(Op::Conv2d { x, kernel, stride })
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Sigmoid(x))
    }

    /// Natural log; every input element must be strictly positive.
    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Log(x))
    }

    /// Mean over all elements, as a one-element tensor.
    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::Mean(x))
    }

    pub fn max_pool2(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Op::MaxPool2 { x, argmax: Vec::new() })
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let value = self.value(x).reshape(shape)?;
        Ok(self.push(Op::Reshape(x), value))
    }

    /// `[B, ...] -> [B, rest]`
    pub fn flatten(&mut self, x: NodeId) -> Result<NodeId> {
        let shape = self.value(x).shape();
        if shape.len() < 2 {
            return Err(Error::shape("flatten", shape, &[0, 0]));
        }
        let batch = shape[0];
        let rest = shape[1..].iter().product();
        self.reshape(x, &[batch, rest])
    }

    pub fn clamp(&mut self, x: NodeId, lo: T, hi: T) -> Result<NodeId> {
        self.apply(Op::Clamp { x, lo, hi })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Sub(a, b))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Mul(a, b))
    }

    /// `scale * x + shift`
    pub fn affine(&mut self, x: NodeId, scale: T, shift: T) -> Result<NodeId> {
        self.apply(Op::Affine { x, scale, shift })
    }

    pub fn scale(&mut self, x: NodeId, factor: T) -> Result<NodeId> {
        self.affine(x, factor, T::zero())
    }

    /// Recomputes every non-leaf node from the leaves into a fresh graph.
    pub fn replay(&self) -> Result<Graph<T>> {
        let mut out = Graph::new();
        for node in &self.nodes {
            match node.op {
                Op::Parameter | Op::Constant => {
                    out.push(node.op.clone(), node.value.clone());
                }
                Op::Reshape(x) => {
                    let value = out.value(x).reshape(node.value.shape())?;
                    out.push(node.op.clone(), value);
                }
                _ => {
                    out.apply(node.op.clone())?;
                }
            }
        }
        Ok(out)
    }

    /// Gradients of the one-element `root` with respect to every reachable node.
    pub fn backward(&self, root: NodeId) -> Result<Gradients<T>> {
        let wanted = vec![true; self.nodes.len()];
        self.backward_masked(root, wanted)
    }

    /// Like [`Graph::backward`] but only propagates along paths that end in
    /// one of `wrt`; the returned map holds gradients for `wrt` and `root`.
    pub fn backward_wrt(&self, root: NodeId, wrt: &[NodeId]) -> Result<Gradients<T>> {
        let mut wanted = vec![false; self.nodes.len()];
        for id in wrt {
            wanted[id.0] = true;
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if !wanted[i] && node.op.inputs().iter().any(|inp| wanted[inp.0]) {
                wanted[i] = true;
            }
        }
        self.backward_masked(root, wanted)
    }

    fn backward_masked(&self, root: NodeId, mut wanted: Vec<bool>) -> Result<Gradients<T>> {
        let root_value = &self.nodes[root.0].value;
        if root_value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a one-element tensor, got shape {:?}",
                root_value.shape()
            )));
        }
        for (w, node) in wanted.iter_mut().zip(&self.nodes) {
            if matches!(node.op, Op::Constant) {
                *w = false;
            }
        }

        let mut grads: Vec<Option<Vec<T>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![T::one()]);
        let mut kept: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            let is_leaf = matches!(node.op, Op::Parameter | Op::Constant);
            let Some(g) = (if is_leaf || idx == root.0 {
                grads[idx].clone()
            } else {
                grads[idx].take()
            }) else {
                continue;
            };
            if is_leaf || idx == root.0 {
                kept[idx] = Some(Tensor::from_parts(g.clone(), node.value.shape().to_vec()));
            }
            self.propagate(&node.op, &node.value, &g, &wanted, &mut grads);
        }
        Ok(Gradients { grads: kept })
    }

    fn propagate(&self, op: &Op<T>, out: &Tensor<T>, g: &[T], wanted: &[bool], grads: &mut [Option<Vec<T>>]) {
        let val = |id: NodeId| self.nodes[id.0].value.data();
        match *op {
            Op::Parameter | Op::Constant => {}
            Op::Dense { x, w, b } => {
                let xs = self.value(x).shape();
                let (rows, inner, cols) = (xs[0], xs[1], out.shape()[1]);
                let need = [wanted[x.0], wanted[w.0], wanted[b.0]];
                let d = kernels::dense_backward(val(x), val(w), g, rows, inner, cols, need);
                accumulate(grads, x, d.x);
                accumulate(grads, w, d.w);
                accumulate(grads, b, d.b);
            }
            Op::Conv2d { x, kernel, stride } => {
                let geom = conv_geometry(self.value(x).shape(), self.value(kernel).shape(), stride);
                let (dx, dk) = kernels::conv2d_backward(val(x), val(kernel), g, &geom, [wanted[x.0], wanted[kernel.0]]);
                accumulate(grads, x, dx);
                accumulate(grads, kernel, dk);
            }
            Op::Relu(x) if wanted[x.0] => {
                let d = val(x)
                    .iter()
                    .zip(g)
                    .map(|(&v, &gv)| if v > T::zero() { gv } else { T::zero() })
                    .collect();
                accumulate(grads, x, Some(d));
            }
            Op::Sigmoid(x) if wanted[x.0] => {
                let d = out
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&s, &gv)| gv * s * (T::one() - s))
                    .collect();
                accumulate(grads, x, Some(d));
            }
            Op::Log(x) if wanted[x.0] => {
                let d = val(x).iter().zip(g).map(|(&v, &gv)| gv / v).collect();
                accumulate(grads, x, Some(d));
            }
            Op::Mean(x) if wanted[x.0] => {
                let n = val(x).len();
                let share = g[0] / T::of(n as f64);
                accumulate(grads, x, Some(vec![share; n]));
            }
            Op::MaxPool2 { x, ref argmax } if wanted[x.0] => {
                let mut d = vec![T::zero(); val(x).len()];
                for (&src, &gv) in argmax.iter().zip(g) {
                    d[src] += gv;
                }
                accumulate(grads, x, Some(d));
            }
            Op::Reshape(x) if wanted[x.0] => accumulate(grads, x, Some(g.to_vec())),
            Op::Clamp { x, lo, hi } if wanted[x.0] => {
                let d = val(x)
                    .iter()
                    .zip(g)
                    .map(|(&v, &gv)| if v >= lo && v <= hi { gv } else { T::zero() })
                    .collect();
                accumulate(grads, x, Some(d));
            }
            Op::Add(a, b) => {
                if wanted[a.0] {
                    accumulate(grads, a, Some(g.to_vec()));
                }
                if wanted[b.0] {
                    accumulate(grads, b, Some(g.to_vec()));
                }
            }
            Op::Sub(a, b) => {
                if wanted[a.0] {
                    accumulate(grads, a, Some(g.to_vec()));
                }
                if wanted[b.0] {
                    accumulate(grads, b, Some(g.iter().map(|&v| -v).collect()));
                }
            }
            Op::Mul(a, b) => {
                if wanted[a.0] {
                    let d = val(b).iter().zip(g).map(|(&bv, &gv)| gv * bv).collect();
                    accumulate(grads, a, Some(d));
                }
                if wanted[b.0] {
                    let d = val(a).iter().zip(g).map(|(&av, &gv)| gv * av).collect();
                    accumulate(grads, b, Some(d));
                }
            }
            Op::Affine { x, scale, .. } if wanted[x.0] => {
                accumulate(grads, x, Some(g.iter().map(|&v| v * scale).collect()));
            }
            _ => {}
        }
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    fn apply(&mut self, mut op: Op<T>) -> Result<NodeId> {
        for inp in op.inputs() {
            if inp.0 >= self.nodes.len() {
                return Err(Error::Contract(format!("node {} is not in this graph", inp.0)));
            }
        }
        let value = self.compute(&mut op)?;
        Ok(self.push(op, value))
    }

    fn compute(&self, op: &mut Op<T>) -> Result<Tensor<T>> {
        match op {
            Op::Parameter | Op::Constant => unreachable!("leaves carry their own value"),
            Op::Dense { x, w, b } => {
                let (xv, wv, bv) = (self.value(*x), self.value(*w), self.value(*b));
                let (xs, ws, bs) = (xv.shape(), wv.shape(), bv.shape());
                if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
                    return Err(Error::shape("dense", xs, ws));
                }
                if bs != [ws[1]] {
                    return Err(Error::shape("dense bias", ws, bs));
                }
                let data = kernels::dense(xv.data(), wv.data(), bv.data(), xs[0], xs[1], ws[1]);
                Ok(Tensor::from_parts(data, vec![xs[0], ws[1]]))
            }
            Op::Conv2d { x, kernel, stride } => {
                let (xv, kv) = (self.value(*x), self.value(*kernel));
                let (xs, ks) = (xv.shape(), kv.shape());
                if xs.len() != 4 || ks.len() != 4 || xs[1] != ks[1] || ks[2] > xs[2] || ks[3] > xs[3] {
                    return Err(Error::shape("conv2d", xs, ks));
                }
                if *stride == 0 {
                    return Err(Error::Contract("conv2d stride must be positive".into()));
                }
                let geom = conv_geometry(xs, ks, *stride);
                let data = kernels::conv2d(xv.data(), kv.data(), &geom);
                Ok(Tensor::from_parts(data, geom.out_shape().to_vec()))
            }
            Op::Relu(x) => Ok(self.value(*x).map(|v| v.max(T::zero()))),
            Op::Sigmoid(x) => Ok(self.value(*x).map(kernels::sigmoid)),
            Op::Log(x) => {
                let xv = self.value(*x);
                if let Some(bad) = xv.data().iter().find(|&&v| !(v > T::zero())) {
                    return Err(Error::Domain {
                        op: "log",
                        reason: format!("non-positive input {bad}"),
                    });
                }
                Ok(xv.map(T::ln))
            }
            Op::Mean(x) => {
                let xv = self.value(*x);
                let sum = xv.data().iter().fold(T::zero(), |s, &v| s + v);
                Ok(Tensor::scalar(sum / T::of(xv.len() as f64)))
            }
            Op::MaxPool2 { x, argmax } => {
                let xv = self.value(*x);
                let s = xv.shape();
                if s.len() != 4 || s[2] < 2 || s[3] < 2 {
                    return Err(Error::shape("max_pool2", s, &[2, 2]));
                }
                let (data, arg) = kernels::max_pool2(xv.data(), s[0] * s[1], s[2], s[3]);
                *argmax = arg;
                Ok(Tensor::from_parts(data, vec![s[0], s[1], s[2] / 2, s[3] / 2]))
            }
            Op::Reshape(_) => unreachable!("reshape is built directly"),
            Op::Clamp { x, lo, hi } => {
                let (lo, hi) = (*lo, *hi);
                if !(lo <= hi) {
                    return Err(Error::Contract(format!("clamp bounds {lo} > {hi}")));
                }
                Ok(self.value(*x).map(|v| v.max(lo).min(hi)))
            }
            Op::Add(a, b) => self.zip(*a, *b, "add", |p, q| p + q),
            Op::Sub(a, b) => self.zip(*a, *b, "sub", |p, q| p - q),
            Op::Mul(a, b) => self.zip(*a, *b, "mul", |p, q| p * q),
            Op::Affine { x, scale, shift } => {
                let (s, t) = (*scale, *shift);
                Ok(self.value(*x).map(|v| s * v + t))
            }
        }
    }

    fn zip(&self, a: NodeId, b: NodeId, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(op, av.shape(), bv.shape()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&p, &q)| f(p, q)).collect();
        Ok(Tensor::from_parts(data, av.shape().to_vec()))
    }
}

fn conv_geometry(xs: &[usize], ks: &[usize], stride: usize) -> ConvGeometry {
    ConvGeometry {
        batch: xs[0],
        in_channels: xs[1],
        height: xs[2],
        width: xs[3],
        out_channels: ks[0],
        kernel_h: ks[2],
        kernel_w: ks[3],
        stride,
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], id: NodeId, d: Option<Vec<T>>) {
    let Some(d) = d else { return };
    match &mut grads[id.0] {
        Some(acc) => {
            for (a, v) in acc.iter_mut().zip(d) {
                *a += v;
            }
        }
        slot @ None => *slot = Some(d),
    }
}

/// Gradients of a differentiated scalar, keyed by node.
///
/// Holds entries for the root and for every leaf the root depends on.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.get(id).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Tensor<T>)> {
        self.grads
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (NodeId(i), g)))
    }
}
