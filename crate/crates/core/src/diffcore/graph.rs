//! Define-by-run tape for reverse-mode differentiation.
//!
//! Every op evaluates eagerly when it is recorded and caches its value on the
//! node. Nodes can only reference earlier nodes, so ids are a topological
//! order and `backward` is a single reverse sweep.

use crate::error::{MinError, Result};

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Relu(NodeId),
    LeakyRelu(NodeId, f64),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Softplus(NodeId),
    Abs(NodeId),
    Log(NodeId),
    Exp(NodeId),
    Softmax(NodeId),
    Mean(NodeId),
    Sum(NodeId),
    SumLast(NodeId),
    Concat(Vec<NodeId>),
    Reshape(NodeId),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// How the right operand of an elementwise binary op lines up with the left.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Broadcast {
    Same,
    Row,
    Scalar,
}

fn broadcast_kind(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Broadcast> {
    if a.shape() == b.shape() {
        Ok(Broadcast::Same)
    } else if b.len() == 1 {
        Ok(Broadcast::Scalar)
    } else if b.len() == a.cols() && b.cols() == a.cols() {
        Ok(Broadcast::Row)
    } else {
        Err(MinError::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `c = a * b` for row-major `a: m x k`, `b: k x n`, with optional transposes.
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    beta: f64,
) {
    // a_t: `a` is stored as k x m; b_t: `b` is stored as n x k.
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths cover the m*k, k*n and m*n extents addressed by the strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(Option::take)
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant leaf; never receives a gradient.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node { op: Op::Leaf, value, requires_grad: false });
        NodeId(self.nodes.len() - 1)
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node { op: Op::Leaf, value, requires_grad: true });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn check(&self, id: NodeId) -> Result<&Tensor> {
        self.nodes.get(id.0).map(|n| &n.value).ok_or(MinError::InvalidNode(id.0))
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, op: Op, value: Tensor, name: &'static str) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(MinError::NonFinite { op: name.to_string() });
        }
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                self.needs(*a) || self.needs(*b)
            }
            Op::Concat(parts) => parts.iter().any(|p| self.needs(*p)),
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Relu(a)
            | Op::LeakyRelu(a, _)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Softplus(a)
            | Op::Abs(a)
            | Op::Log(a)
            | Op::Exp(a)
            | Op::Softmax(a)
            | Op::Mean(a)
            | Op::Sum(a)
            | Op::SumLast(a)
            | Op::Reshape(a) => self.needs(*a),
        };
        self.nodes.push(Node { op, value, requires_grad });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.check(a)?, self.check(b)?);
        if va.shape().len() != 2 || vb.shape().len() != 2 || va.cols() != vb.rows() {
            return Err(MinError::shape("matmul", format!("{:?} x {:?}", va.shape(), vb.shape())));
        }
        let (m, k, n) = (va.rows(), va.cols(), vb.cols());
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, va.data(), false, vb.data(), false, &mut out, 0.0);
        self.push(Op::MatMul(a, b), Tensor::from_parts(vec![m, n], out), "matmul")
    }

    fn binary(
        &mut self,
        a: NodeId,
        b: NodeId,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        let (va, vb) = (self.check(a)?, self.check(b)?);
        let kind = broadcast_kind(name, va, vb)?;
        let bd = vb.data();
        let c = va.cols();
        let data = va
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = match kind {
                    Broadcast::Same => bd[i],
                    Broadcast::Row => bd[i % c],
                    Broadcast::Scalar => bd[0],
                };
                f(x, y)
            })
            .collect();
        let out = Tensor::from_parts(va.shape().to_vec(), data);
        self.push(op, out, name)
    }

    /// `a + b`, with `b` broadcast over rows when it is a single row or a scalar.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product, broadcasting like [`Graph::add`].
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn unary(
        &mut self,
        a: NodeId,
        name: &'static str,
        f: impl Fn(f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        let out = self.check(a)?.map(f);
        self.push(op, out, name)
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> Result<NodeId> {
        self.unary(a, "scale", |x| k * x, Op::Scale(a, k))
    }

    pub fn add_scalar(&mut self, a: NodeId, k: f64) -> Result<NodeId> {
        self.unary(a, "add_scalar", |x| x + k, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, "relu", |x| x.max(0.0), Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> Result<NodeId> {
        self.unary(a, "leaky_relu", |x| if x > 0.0 { x } else { slope * x }, Op::LeakyRelu(a, slope))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, "tanh", f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, "sigmoid", sigmoid, Op::Sigmoid(a))
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, "softplus", softplus, Op::Softplus(a))
    }

    pub fn abs(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, "abs", f64::abs, Op::Abs(a))
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, "log", f64::ln, Op::Log(a))
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, "exp", f64::exp, Op::Exp(a))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.check(a)?;
        let c = va.cols();
        let mut data = va.data().to_vec();
        for row in data.chunks_mut(c) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let out = Tensor::from_parts(va.shape().to_vec(), data);
        self.push(Op::Softmax(a), out, "softmax")
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.check(a)?;
        let m = va.data().iter().sum::<f64>() / va.len() as f64;
        self.push(Op::Mean(a), Tensor::scalar(m), "mean")
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.check(a)?.data().iter().sum::<f64>();
        self.push(Op::Sum(a), Tensor::scalar(s), "sum")
    }

    /// Sum over the last axis, keeping it as an extent of 1.
    pub fn sum_last(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.check(a)?;
        let c = va.cols();
        let data: Vec<f64> = va.data().chunks(c).map(|r| r.iter().sum()).collect();
        let mut shape = va.shape().to_vec();
        *shape.last_mut().expect("non-empty shape") = 1;
        self.push(Op::SumLast(a), Tensor::from_parts(shape, data), "sum_last")
    }

    /// Concatenation along the last axis; every part must have the same row count.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(MinError::shape("concat", "no inputs"));
        }
        let rows = self.check(parts[0])?.rows();
        let mut total = 0;
        for &p in parts {
            let v = self.check(p)?;
            if v.rows() != rows {
                return Err(MinError::shape("concat", format!("row counts {rows} vs {}", v.rows())));
            }
            total += v.cols();
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        self.push(Op::Concat(parts.to_vec()), Tensor::from_parts(vec![rows, total], data), "concat")
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let out = self.check(a)?.clone().reshape(shape.to_vec())?;
        self.push(Op::Reshape(a), out, "reshape")
    }

    /// Reverse sweep from a scalar output. Returns gradients for every node
    /// that depends on a differentiable leaf.
    pub fn backward(&self, output: NodeId) -> Result<Gradients> {
        let out = self.check(output)?;
        if out.len() != 1 {
            return Err(MinError::shape("backward", format!("output must be scalar, got {:?}", out.shape())));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if !self.nodes[output.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[output.0] = Some(Tensor::filled(out.shape(), 1.0));

        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &node.value, g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        match &mut grads[id.0] {
            Some(existing) => {
                for (e, v) in existing.data_mut().iter_mut().zip(g.data()) {
                    *e += v;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    /// Gradient for the right operand of a broadcasting binary op.
    fn reduce_broadcast(&self, a: NodeId, b: NodeId, g: Vec<f64>) -> Tensor {
        let (va, vb) = (self.value(a), self.value(b));
        match broadcast_kind("backward", va, vb).expect("validated at forward time") {
            Broadcast::Same => Tensor::from_parts(vb.shape().to_vec(), g),
            Broadcast::Scalar => Tensor::from_parts(vb.shape().to_vec(), vec![g.iter().sum()]),
            Broadcast::Row => {
                let c = va.cols();
                let mut acc = vec![0.0; c];
                for row in g.chunks(c) {
                    for (s, v) in acc.iter_mut().zip(row) {
                        *s += v;
                    }
                }
                Tensor::from_parts(vb.shape().to_vec(), acc)
            }
        }
    }

    fn b_at(&self, a: NodeId, b: NodeId) -> impl Fn(usize) -> f64 + '_ {
        let (va, vb) = (self.value(a), self.value(b));
        let kind = broadcast_kind("backward", va, vb).expect("validated at forward time");
        let c = va.cols();
        let bd = vb.data();
        move |i| match kind {
            Broadcast::Same => bd[i],
            Broadcast::Row => bd[i % c],
            Broadcast::Scalar => bd[0],
        }
    }

    fn propagate(&self, node: &Node, y: &Tensor, g: Tensor, grads: &mut [Option<Tensor>]) {
        let like = |t: &Tensor, data: Vec<f64>| Tensor::from_parts(t.shape().to_vec(), data);
        let elementwise = |a: NodeId, grads: &mut [Option<Tensor>], df: &dyn Fn(f64, f64) -> f64| {
            let x = self.value(a);
            let data = x.data().iter().zip(y.data()).zip(g.data()).map(|((&xi, &yi), &gi)| gi * df(xi, yi)).collect();
            self.accumulate(grads, a, like(x, data));
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                if self.needs(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, vb.data(), true, &mut da, 0.0);
                    self.accumulate(grads, *a, like(va, da));
                }
                if self.needs(*b) {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, va.data(), true, g.data(), false, &mut db, 0.0);
                    self.accumulate(grads, *b, like(vb, db));
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if self.needs(*b) {
                    let gb = g.data().iter().map(|v| sign * v).collect();
                    let t = self.reduce_broadcast(*a, *b, gb);
                    self.accumulate(grads, *b, t);
                }
                self.accumulate(grads, *a, g);
            }
            Op::Mul(a, b) => {
                let va = self.value(*a);
                if self.needs(*a) {
                    let bat = self.b_at(*a, *b);
                    let da = g.data().iter().enumerate().map(|(i, gi)| gi * bat(i)).collect();
                    self.accumulate(grads, *a, like(va, da));
                }
                if self.needs(*b) {
                    let gb = g.data().iter().zip(va.data()).map(|(gi, ai)| gi * ai).collect();
                    let t = self.reduce_broadcast(*a, *b, gb);
                    self.accumulate(grads, *b, t);
                }
            }
            Op::Scale(a, k) => elementwise(*a, grads, &|_, _| *k),
            Op::AddScalar(a) | Op::Reshape(a) => {
                let x = self.value(*a);
                self.accumulate(grads, *a, like(x, g.into_data()));
            }
            Op::Relu(a) => elementwise(*a, grads, &|x, _| if x > 0.0 { 1.0 } else { 0.0 }),
            Op::LeakyRelu(a, s) => elementwise(*a, grads, &|x, _| if x > 0.0 { 1.0 } else { *s }),
            Op::Tanh(a) => elementwise(*a, grads, &|_, t| 1.0 - t * t),
            Op::Sigmoid(a) => elementwise(*a, grads, &|_, s| s * (1.0 - s)),
            Op::Softplus(a) => elementwise(*a, grads, &|x, _| sigmoid(x)),
            Op::Abs(a) => elementwise(*a, grads, &|x, _| {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }),
            Op::Log(a) => elementwise(*a, grads, &|x, _| 1.0 / x),
            Op::Exp(a) => elementwise(*a, grads, &|_, e| e),
            Op::Softmax(a) => {
                let c = y.cols();
                let mut dx = vec![0.0; y.len()];
                for ((dr, yr), gr) in dx.chunks_mut(c).zip(y.data().chunks(c)).zip(g.data().chunks(c)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((d, yi), gi) in dr.iter_mut().zip(yr).zip(gr) {
                        *d = yi * (gi - dot);
                    }
                }
                let x = self.value(*a);
                self.accumulate(grads, *a, like(x, dx));
            }
            Op::Mean(a) | Op::Sum(a) => {
                let x = self.value(*a);
                let scale = if matches!(node.op, Op::Mean(_)) { 1.0 / x.len() as f64 } else { 1.0 };
                self.accumulate(grads, *a, Tensor::filled(x.shape(), g.item() * scale));
            }
            Op::SumLast(a) => {
                let x = self.value(*a);
                let c = x.cols();
                let dx = (0..x.len()).map(|i| g.data()[i / c]).collect();
                self.accumulate(grads, *a, like(x, dx));
            }
            Op::Concat(parts) => {
                let total = y.cols();
                let mut offset = 0;
                for &p in parts {
                    let x = self.value(p);
                    let c = x.cols();
                    if self.needs(p) {
                        let mut dx = Vec::with_capacity(x.len());
                        for row in g.data().chunks(total) {
                            dx.extend_from_slice(&row[offset..offset + c]);
                        }
                        self.accumulate(grads, p, Tensor::from_parts(vec![x.rows(), c], dx).reshape(x.shape().to_vec()).expect("same size"));
                    }
                    offset += c;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_by_hand() {
        let mut g = Graph::new();
        let a = g.input(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
        let b = g.input(Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap());
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[11.0]);
        assert_eq!(g.value(c).shape(), &[1, 1]);
    }

    #[test]
    fn relu_and_softmax_values() {
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap());
        let r = g.relu(x).unwrap();
        assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);
        let z = g.input(Tensor::new(vec![2], vec![0.0, 0.0]).unwrap());
        let s = g.softmax(z).unwrap();
        assert_eq!(g.value(s).data(), &[0.5, 0.5]);
    }

    #[test]
    fn square_sum_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(0.0));
        let s = g.sigmoid(x).unwrap();
        let grads = g.backward(s).unwrap();
        assert!((grads.get(x).unwrap().item() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn non_scalar_backward_is_rejected() {
        let mut g = Graph::new();
        let x = g.param(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let y = g.tanh(x).unwrap();
        assert!(matches!(g.backward(y), Err(MinError::ShapeMismatch { .. })));
    }

    #[test]
    fn non_finite_is_an_error() {
        let mut g = Graph::new();
        let x = g.input(Tensor::scalar(0.0));
        assert!(matches!(g.log(x), Err(MinError::NonFinite { .. })));
        let big = g.input(Tensor::scalar(1000.0));
        assert!(g.exp(big).is_err());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut g = Graph::new();
        let a = g.input(Tensor::matrix(2, 3, vec![0.0; 6]).unwrap());
        let b = g.input(Tensor::matrix(2, 3, vec![0.0; 6]).unwrap());
        assert!(g.matmul(a, b).is_err());
        let c = g.input(Tensor::new(vec![2], vec![0.0; 2]).unwrap());
        assert!(g.add(a, c).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut g = Graph::new();
        let x = g.input(Tensor::matrix(2, 3, vec![1.0, -2.0, 30.0, 0.1, 0.2, -700.0]).unwrap());
        let s = g.softmax(x).unwrap();
        for r in 0..2 {
            let total: f64 = g.value(s).row(r).iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn broadcast_add_gradient_reduces_rows() {
        let mut g = Graph::new();
        let a = g.input(Tensor::matrix(3, 2, vec![1.0; 6]).unwrap());
        let b = g.param(Tensor::matrix(1, 2, vec![0.5, -0.5]).unwrap());
        let c = g.add(a, b).unwrap();
        let s = g.sum(c).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(b).unwrap().data(), &[3.0, 3.0]);
        assert!(grads.get(a).is_none());
    }
}
