//! Static computation graphs with reverse-mode differentiation.
//!
//! A [`Graph`] is built once with a [`GraphBuilder`] and then evaluated many
//! times against a [`ParamStore`] and a set of bound [`Inputs`]. Every node is
//! one of eight differentiable primitives (affine, sigmoid, relu, hadamard,
//! concat, sum-elements, l2-normalize, binary cross-entropy) or a leaf
//! (named input, named parameter, constant). Nodes are stored in creation
//! order, so parents always precede children and the graph is acyclic by
//! construction.
//!
//! Row-wise primitives (affine, sum-elements, l2-normalize) act on each row of
//! a `[batch, width]` tensor independently, which lets one evaluation carry a
//! whole minibatch.

use std::collections::{BTreeMap, HashSet};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Named parameter tensors, ordered by name.
pub type ParamStore<T> = BTreeMap<String, Tensor<T>>;
/// Named input bindings for one evaluation.
pub type Inputs<T> = BTreeMap<String, Tensor<T>>;
/// Loss gradient for every parameter declared in a graph.
pub type Gradients<T> = BTreeMap<String, Tensor<T>>;

/// Divisor floor for l2-normalize.
pub const L2_EPS: f64 = 1e-12;
/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before logarithms.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone)]
pub enum Op<T> {
    Input(String),
    Param(String),
    Constant(Tensor<T>),
    /// `x · w + b` with `w: [in, out]`, `b: [out]`.
    Affine {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    Sigmoid(NodeId),
    Relu(NodeId),
    Hadamard(NodeId, NodeId),
    /// Concatenation along the row (feature) axis.
    Concat(Vec<NodeId>),
    /// Per-row sum.
    SumElements(NodeId),
    /// Per-row division by `max(‖row‖, L2_EPS)`.
    L2Normalize(NodeId),
    /// `Σ weight · BCE(pred, target)` reduced to a scalar.
    Bce {
        pred: NodeId,
        target: NodeId,
        weight: Option<NodeId>,
    },
}

impl<T> Op<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Param(_) => "param",
            Op::Constant(_) => "constant",
            Op::Affine { .. } => "affine",
            Op::Sigmoid(_) => "sigmoid",
            Op::Relu(_) => "relu",
            Op::Hadamard(..) => "hadamard",
            Op::Concat(_) => "concat",
            Op::SumElements(_) => "sum-elements",
            Op::L2Normalize(_) => "l2-normalize",
            Op::Bce { .. } => "binary-cross-entropy",
        }
    }

    fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Input(_) | Op::Param(_) | Op::Constant(_) => Vec::new(),
            Op::Affine { x, w, b } => vec![*x, *w, *b],
            Op::Sigmoid(a) | Op::Relu(a) | Op::SumElements(a) | Op::L2Normalize(a) => vec![*a],
            Op::Hadamard(a, b) => vec![*a, *b],
            Op::Concat(parts) => parts.clone(),
            Op::Bce {
                pred,
                target,
                weight,
            } => {
                let mut p = vec![*pred, *target];
                p.extend(weight);
                p
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Node<T> {
    op: Op<T>,
    requires_grad: bool,
}

#[derive(Debug, Clone)]
pub struct GraphBuilder<T> {
    nodes: Vec<Node<T>>,
    params: Vec<(String, NodeId)>,
    outputs: BTreeMap<String, NodeId>,
}

impl<T: Scalar> Default for GraphBuilder<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> GraphBuilder<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: Vec::new(),
            outputs: BTreeMap::new(),
        }
    }

    fn push(&mut self, op: Op<T>) -> NodeId {
        let requires_grad = match &op {
            Op::Param(_) => true,
            Op::Input(_) | Op::Constant(_) => false,
            other => other
                .parents()
                .iter()
                .any(|p| self.nodes[p.0].requires_grad),
        };
        self.nodes.push(Node { op, requires_grad });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, name: &str) -> NodeId {
        self.push(Op::Input(name.to_owned()))
    }

    /// Declares a learnable parameter. Each name may appear once per graph.
    pub fn param(&mut self, name: &str) -> Result<NodeId> {
        if self.params.iter().any(|(n, _)| n == name) {
            return Err(Error::DuplicateParam(name.to_owned()));
        }
        let id = self.push(Op::Param(name.to_owned()));
        self.params.push((name.to_owned(), id));
        Ok(id)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(Op::Constant(value))
    }

    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Affine { x, w, b })
    }

    /// Declares `{prefix}.w` and `{prefix}.b` and applies them to `x`.
    pub fn dense(&mut self, x: NodeId, prefix: &str) -> Result<NodeId> {
        let w = self.param(&format!("{prefix}.w"))?;
        let b = self.param(&format!("{prefix}.b"))?;
        Ok(self.affine(x, w, b))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Relu(x))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Hadamard(a, b))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        self.push(Op::Concat(parts.to_vec()))
    }

    pub fn sum_elements(&mut self, x: NodeId) -> NodeId {
        self.push(Op::SumElements(x))
    }

    pub fn l2_normalize(&mut self, x: NodeId) -> NodeId {
        self.push(Op::L2Normalize(x))
    }

    pub fn bce(&mut self, pred: NodeId, target: NodeId, weight: Option<NodeId>) -> NodeId {
        self.push(Op::Bce {
            pred,
            target,
            weight,
        })
    }

    pub fn output(&mut self, name: &str, node: NodeId) {
        self.outputs.insert(name.to_owned(), node);
    }

    pub fn build(self) -> Graph<T> {
        Graph {
            nodes: self.nodes,
            params: self.params,
            outputs: self.outputs,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    params: Vec<(String, NodeId)>,
    outputs: BTreeMap<String, NodeId>,
}

/// Cached node values of one forward pass.
#[derive(Debug, Clone)]
pub struct Evaluation<T> {
    values: Vec<Tensor<T>>,
    outputs: BTreeMap<String, NodeId>,
}

impl<T: Scalar> Evaluation<T> {
    pub fn value(&self, node: NodeId) -> &Tensor<T> {
        &self.values[node.0]
    }

    pub fn output(&self, name: &str) -> Option<&Tensor<T>> {
        self.outputs.get(name).map(|id| &self.values[id.0])
    }

    pub fn outputs(&self) -> BTreeMap<String, Tensor<T>> {
        self.outputs
            .iter()
            .map(|(k, id)| (k.clone(), self.values[id.0].clone()))
            .collect()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn op(&self, node: NodeId) -> &Op<T> {
        &self.nodes[node.0].op
    }

    pub fn output_node(&self, name: &str) -> Option<NodeId> {
        self.outputs.get(name).copied()
    }

    /// Parameter names in declaration order.
    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|(n, _)| n.as_str())
    }

    /// Names of all input leaves.
    pub fn input_names(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.nodes
            .iter()
            .filter_map(|n| match &n.op {
                Op::Input(name) if seen.insert(name.as_str()) => Some(name.as_str()),
                _ => None,
            })
            .collect()
    }

    /// Forward pass. Fails on unbound inputs, missing parameters, shape
    /// mismatches and non-finite intermediates, naming the offending node.
    pub fn evaluate(&self, params: &ParamStore<T>, inputs: &Inputs<T>) -> Result<Evaluation<T>> {
        let mut values: Vec<Tensor<T>> = Vec::with_capacity(self.nodes.len());
        for (idx, node) in self.nodes.iter().enumerate() {
            let value = forward_node(idx, &node.op, &values, params, inputs)?;
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    node: idx,
                    op: node.op.kind(),
                });
            }
            values.push(value);
        }
        Ok(Evaluation {
            values,
            outputs: self.outputs.clone(),
        })
    }

    /// Reverse pass from a scalar loss node. Every declared parameter gets a
    /// gradient entry; parameters with no path to the loss get zeros.
    pub fn backward(&self, eval: &Evaluation<T>, loss: NodeId) -> Result<Gradients<T>> {
        let loss_value = &eval.values[loss.0];
        if loss_value.len() != 1 {
            return Err(Error::NonScalarLoss {
                node: loss.0,
                shape: loss_value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::filled(loss_value.shape(), T::one()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            for (parent, g) in backward_node(&node.op, &upstream, &eval.values, &self.nodes) {
                match &mut grads[parent.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
            // Parameter gradients are collected below, keep them.
            if matches!(node.op, Op::Param(_)) {
                grads[idx] = Some(upstream);
            }
        }

        let mut out = Gradients::new();
        for (name, id) in &self.params {
            let g = grads
                .get(id.0)
                .and_then(|g| g.clone())
                .unwrap_or_else(|| Tensor::zeros(eval.values[id.0].shape()));
            out.insert(name.clone(), g);
        }
        Ok(out)
    }
}

fn shape_err(node: usize, op: &'static str, detail: String) -> Error {
    Error::Shape { node, op, detail }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    let one = T::one();
    let y = if x >= T::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    };
    // keep strictly inside (0, 1) even where the exact value rounds to 0 or 1
    y.max(T::min_positive_value())
        .min(one - T::epsilon() / T::lit(2.0))
}

fn forward_node<T: Scalar>(
    idx: usize,
    op: &Op<T>,
    values: &[Tensor<T>],
    params: &ParamStore<T>,
    inputs: &Inputs<T>,
) -> Result<Tensor<T>> {
    let kind = op.kind();
    let v = |id: &NodeId| &values[id.0];
    Ok(match op {
        Op::Input(name) => inputs
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnboundInput(name.clone()))?,
        Op::Param(name) => params
            .get(name)
            .cloned()
            .ok_or_else(|| Error::MissingParam(name.clone()))?,
        Op::Constant(t) => t.clone(),
        Op::Affine { x, w, b } => {
            let (x, w, b) = (v(x), v(w), v(b));
            if w.rank() != 2 || b.rank() != 1 {
                return Err(shape_err(
                    idx,
                    kind,
                    format!(
                        "weight {:?} must be rank 2, bias {:?} rank 1",
                        w.shape(),
                        b.shape()
                    ),
                ));
            }
            let (n_in, n_out) = (w.shape()[0], w.shape()[1]);
            if x.cols() != n_in || b.len() != n_out {
                return Err(shape_err(
                    idx,
                    kind,
                    format!(
                        "input {:?}, weight {:?}, bias {:?}",
                        x.shape(),
                        w.shape(),
                        b.shape()
                    ),
                ));
            }
            affine_forward(x, w, b)
        }
        Op::Sigmoid(a) => v(a).map(sigmoid),
        Op::Relu(a) => v(a).map(|x| x.max(T::zero())),
        Op::Hadamard(a, b) => {
            let (a, b) = (v(a), v(b));
            if a.shape() != b.shape() {
                return Err(shape_err(
                    idx,
                    kind,
                    format!("{:?} vs {:?}", a.shape(), b.shape()),
                ));
            }
            let data = a
                .data()
                .iter()
                .zip(b.data())
                .map(|(&x, &y)| x * y)
                .collect();
            Tensor::new(a.shape().to_vec(), data)?
        }
        Op::Concat(parts) => {
            let first = parts
                .first()
                .map(v)
                .ok_or_else(|| shape_err(idx, kind, "no operands".into()))?;
            let (rank, rows) = (first.rank(), first.rows());
            for p in parts.iter().map(v) {
                if p.rank() != rank || p.rows() != rows {
                    return Err(shape_err(
                        idx,
                        kind,
                        format!(
                            "operand {:?} incompatible with {:?}",
                            p.shape(),
                            first.shape()
                        ),
                    ));
                }
            }
            let width: usize = parts.iter().map(|p| v(p).cols()).sum();
            let mut data = Vec::with_capacity(rows * width);
            for r in 0..rows {
                for p in parts {
                    data.extend_from_slice(v(p).row(r));
                }
            }
            let shape = if rank == 1 {
                vec![width]
            } else {
                vec![rows, width]
            };
            Tensor::new(shape, data)?
        }
        Op::SumElements(a) => {
            let a = v(a);
            let sums: Vec<T> = (0..a.rows())
                .map(|r| a.row(r).iter().copied().sum())
                .collect();
            if a.rank() == 1 {
                Tensor::vector(sums)
            } else {
                Tensor::matrix(a.rows(), 1, sums)?
            }
        }
        Op::L2Normalize(a) => {
            let a = v(a);
            let mut out = a.clone();
            for r in 0..a.rows() {
                let norm = row_norm(a.row(r)).max(T::lit(L2_EPS));
                for x in out.row_mut(r) {
                    *x = *x / norm;
                }
            }
            out
        }
        Op::Bce {
            pred,
            target,
            weight,
        } => {
            let (p, t) = (v(pred), v(target));
            if p.shape() != t.shape() {
                return Err(shape_err(
                    idx,
                    kind,
                    format!("prediction {:?} vs target {:?}", p.shape(), t.shape()),
                ));
            }
            if let Some(w) = weight.as_ref().map(v) {
                if w.shape() != p.shape() {
                    return Err(shape_err(
                        idx,
                        kind,
                        format!("weight {:?} vs prediction {:?}", w.shape(), p.shape()),
                    ));
                }
            }
            let mut total = T::zero();
            for i in 0..p.len() {
                let w = weight.as_ref().map_or(T::one(), |w| v(w).data()[i]);
                total = total + w * bce_value(p.data()[i], t.data()[i]);
            }
            Tensor::scalar(total)
        }
    })
}

fn row_norm<T: Scalar>(row: &[T]) -> T {
    row.iter().map(|&x| x * x).sum::<T>().sqrt()
}

fn clamp_prob<T: Scalar>(p: T) -> T {
    let lo = T::lit(BCE_CLAMP);
    p.max(lo).min(T::one() - lo)
}

fn bce_value<T: Scalar>(p: T, t: T) -> T {
    let p = clamp_prob(p);
    -(t * p.ln() + (T::one() - t) * (T::one() - p).ln())
}

fn bce_grad<T: Scalar>(p: T, t: T) -> T {
    let lo = T::lit(BCE_CLAMP);
    if p < lo || p > T::one() - lo {
        return T::zero();
    }
    -t / p + (T::one() - t) / (T::one() - p)
}

/// `y = x · w + b`, accumulated as row axpys so the inner loop vectorizes.
fn affine_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (n_in, n_out) = (w.shape()[0], w.shape()[1]);
    let rows = x.rows();
    let wd = w.data();
    let mut data = Vec::with_capacity(rows * n_out);
    for _ in 0..rows {
        data.extend_from_slice(b.data());
    }
    for r in 0..rows {
        let xr = x.row(r);
        let yr = &mut data[r * n_out..(r + 1) * n_out];
        for k in 0..n_in {
            let a = xr[k];
            if a == T::zero() {
                continue;
            }
            let wk = &wd[k * n_out..(k + 1) * n_out];
            for (y, &wv) in yr.iter_mut().zip(wk) {
                *y = *y + a * wv;
            }
        }
    }
    let shape = if x.rank() == 1 {
        vec![n_out]
    } else {
        vec![rows, n_out]
    };
    Tensor::new(shape, data).expect("affine output shape")
}

fn backward_node<T: Scalar>(
    op: &Op<T>,
    up: &Tensor<T>,
    values: &[Tensor<T>],
    nodes: &[Node<T>],
) -> Vec<(NodeId, Tensor<T>)> {
    let needs = |id: &NodeId| nodes[id.0].requires_grad;
    let v = |id: &NodeId| &values[id.0];
    let mut out = Vec::new();
    match op {
        Op::Input(_) | Op::Param(_) | Op::Constant(_) => {}
        Op::Affine { x, w, b } => {
            let (xv, wv) = (v(x), v(w));
            let (n_in, n_out) = (wv.shape()[0], wv.shape()[1]);
            let rows = xv.rows();
            if needs(b) {
                let mut gb = vec![T::zero(); n_out];
                for r in 0..rows {
                    for (g, &u) in gb.iter_mut().zip(up.row(r)) {
                        *g = *g + u;
                    }
                }
                out.push((*b, Tensor::vector(gb)));
            }
            if needs(w) {
                let mut gw = vec![T::zero(); n_in * n_out];
                for r in 0..rows {
                    let (xr, ur) = (xv.row(r), up.row(r));
                    for k in 0..n_in {
                        let a = xr[k];
                        if a == T::zero() {
                            continue;
                        }
                        for (g, &u) in gw[k * n_out..(k + 1) * n_out].iter_mut().zip(ur) {
                            *g = *g + a * u;
                        }
                    }
                }
                out.push((
                    *w,
                    Tensor::new(wv.shape().to_vec(), gw).expect("weight grad"),
                ));
            }
            if needs(x) {
                // dx = up · wᵀ, as axpys over the rows of wᵀ
                let wd = wv.data();
                let mut wt = vec![T::zero(); n_in * n_out];
                for k in 0..n_in {
                    for j in 0..n_out {
                        wt[j * n_in + k] = wd[k * n_out + j];
                    }
                }
                let mut gx = vec![T::zero(); rows * n_in];
                for r in 0..rows {
                    let gr = &mut gx[r * n_in..(r + 1) * n_in];
                    for (j, &u) in up.row(r).iter().enumerate() {
                        if u == T::zero() {
                            continue;
                        }
                        for (g, &wj) in gr.iter_mut().zip(&wt[j * n_in..(j + 1) * n_in]) {
                            *g = *g + u * wj;
                        }
                    }
                }
                out.push((
                    *x,
                    Tensor::new(xv.shape().to_vec(), gx).expect("input grad"),
                ));
            }
        }
        Op::Sigmoid(a) => {
            if needs(a) {
                // recompute from the input to keep the node value out of reach
                let y = v(a).map(sigmoid);
                let data = y
                    .data()
                    .iter()
                    .zip(up.data())
                    .map(|(&s, &u)| u * s * (T::one() - s))
                    .collect();
                out.push((
                    *a,
                    Tensor::new(y.shape().to_vec(), data).expect("sigmoid grad"),
                ));
            }
        }
        Op::Relu(a) => {
            if needs(a) {
                let x = v(a);
                let data = x
                    .data()
                    .iter()
                    .zip(up.data())
                    .map(|(&xv, &u)| if xv > T::zero() { u } else { T::zero() })
                    .collect();
                out.push((
                    *a,
                    Tensor::new(x.shape().to_vec(), data).expect("relu grad"),
                ));
            }
        }
        Op::Hadamard(a, b) => {
            let (av, bv) = (v(a), v(b));
            if needs(a) {
                let data = bv
                    .data()
                    .iter()
                    .zip(up.data())
                    .map(|(&y, &u)| u * y)
                    .collect();
                out.push((
                    *a,
                    Tensor::new(av.shape().to_vec(), data).expect("hadamard grad"),
                ));
            }
            if needs(b) {
                let data = av
                    .data()
                    .iter()
                    .zip(up.data())
                    .map(|(&x, &u)| u * x)
                    .collect();
                out.push((
                    *b,
                    Tensor::new(bv.shape().to_vec(), data).expect("hadamard grad"),
                ));
            }
        }
        Op::Concat(parts) => {
            let mut offset = 0;
            for p in parts {
                let pv = v(p);
                let w = pv.cols();
                if needs(p) {
                    let mut data = Vec::with_capacity(pv.len());
                    for r in 0..pv.rows() {
                        data.extend_from_slice(&up.row(r)[offset..offset + w]);
                    }
                    out.push((
                        *p,
                        Tensor::new(pv.shape().to_vec(), data).expect("concat grad"),
                    ));
                }
                offset += w;
            }
        }
        Op::SumElements(a) => {
            if needs(a) {
                let x = v(a);
                let mut data = Vec::with_capacity(x.len());
                for r in 0..x.rows() {
                    let u = up.data()[r];
                    data.extend(std::iter::repeat_n(u, x.cols()));
                }
                out.push((*a, Tensor::new(x.shape().to_vec(), data).expect("sum grad")));
            }
        }
        Op::L2Normalize(a) => {
            if needs(a) {
                let x = v(a);
                let eps = T::lit(L2_EPS);
                let mut g = x.clone();
                for r in 0..x.rows() {
                    let xr = x.row(r);
                    let ur = up.row(r);
                    let norm = row_norm(xr);
                    let gr = g.row_mut(r);
                    if norm > eps {
                        // (I - y yᵀ) u / ‖x‖ with y = x / ‖x‖
                        let dot: T = xr.iter().zip(ur).map(|(&xv, &u)| xv * u).sum();
                        let n3 = norm * norm * norm;
                        for ((gv, &xv), &u) in gr.iter_mut().zip(xr).zip(ur) {
                            *gv = u / norm - xv * dot / n3;
                        }
                    } else {
                        for (gv, &u) in gr.iter_mut().zip(ur) {
                            *gv = u / eps;
                        }
                    }
                }
                out.push((*a, g));
            }
        }
        Op::Bce {
            pred,
            target,
            weight,
        } => {
            let u = up.data()[0];
            let (p, t) = (v(pred), v(target));
            let w = weight.as_ref().map(v);
            if needs(pred) {
                let data = (0..p.len())
                    .map(|i| {
                        let wi = w.map_or(T::one(), |w| w.data()[i]);
                        u * wi * bce_grad(p.data()[i], t.data()[i])
                    })
                    .collect();
                out.push((
                    *pred,
                    Tensor::new(p.shape().to_vec(), data).expect("bce grad"),
                ));
            }
            if needs(target) {
                let data = (0..p.len())
                    .map(|i| {
                        let wi = w.map_or(T::one(), |w| w.data()[i]);
                        let pc = clamp_prob(p.data()[i]);
                        u * wi * ((T::one() - pc).ln() - pc.ln())
                    })
                    .collect();
                out.push((
                    *target,
                    Tensor::new(t.shape().to_vec(), data).expect("bce grad"),
                ));
            }
            if let (Some(wid), Some(_)) = (weight, w) {
                if needs(wid) {
                    let data = (0..p.len())
                        .map(|i| u * bce_value(p.data()[i], t.data()[i]))
                        .collect();
                    out.push((
                        *wid,
                        Tensor::new(p.shape().to_vec(), data).expect("bce grad"),
                    ));
                }
            }
        }
    }
    out
}
