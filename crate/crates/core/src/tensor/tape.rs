//! Reverse-mode automatic differentiation over [`DenseTensor`] values.
//!
//! A [`Tape`] is an append-only list of nodes. Every recorded op computes its
//! forward value immediately and keeps it; [`Tape::backward`] then walks the
//! nodes in reverse recording order and accumulates adjoints. Node inputs
//! always precede the node, so the recording order is already topological.
//!
//! Elementwise binary ops broadcast numpy-style (trailing dimensions aligned,
//! size-1 dimensions stretched). Backward reduces the adjoint back onto the
//! input shape.

use super::DenseTensor;
use crate::error::{Error, Result};

/// Index of a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The closed set of differentiable operations.
#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    MatMul,
    Add,
    Sub,
    Mul,
    Relu,
    Exp,
    Log,
    Square,
    Sum,
    Mean,
    Broadcast(Vec<usize>),
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::MatMul => "matmul",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Relu => "relu",
            OpKind::Exp => "exp",
            OpKind::Log => "log",
            OpKind::Square => "square",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::Broadcast(_) => "broadcast",
        }
    }

    fn arity(&self) -> usize {
        match self {
            OpKind::MatMul | OpKind::Add | OpKind::Sub | OpKind::Mul => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Relu(usize),
    Exp(usize),
    Log(usize),
    Square(usize),
    Sum(usize),
    Mean(usize),
    Broadcast(usize),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: DenseTensor,
    needs_grad: bool,
}

/// Per-step computation record. Discard after `backward`.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<DenseTensor>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a differentiable input.
    pub fn leaf(&mut self, value: DenseTensor) -> Result<NodeId> {
        self.push_input(value, true)
    }

    /// Adds an input that never receives an adjoint.
    pub fn constant(&mut self, value: DenseTensor) -> Result<NodeId> {
        self.push_input(value, false)
    }

    fn push_input(&mut self, value: DenseTensor, trainable: bool) -> Result<NodeId> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: "leaf" });
        }
        let op = if trainable { Op::Leaf } else { Op::Constant };
        Ok(self.push(op, value, trainable))
    }

    fn push(&mut self, op: Op, value: DenseTensor, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        self.grads.push(None);
        NodeId(self.nodes.len() - 1)
    }

    fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes.get(id.0).ok_or(Error::UnknownNode(id.0))
    }

    pub fn value(&self, id: NodeId) -> &DenseTensor {
        &self.nodes[id.0].value
    }

    /// Records `kind` applied to `inputs` and computes its forward value.
    pub fn record(&mut self, kind: OpKind, inputs: &[NodeId]) -> Result<NodeId> {
        if inputs.len() != kind.arity() {
            return Err(Error::InvalidArgument(format!(
                "{} expects {} inputs, got {}",
                kind.name(),
                kind.arity(),
                inputs.len()
            )));
        }
        for &id in inputs {
            self.node(id)?;
        }
        let needs_grad = inputs.iter().any(|id| self.nodes[id.0].needs_grad);
        let a = inputs[0].0;
        let (op, value) = match &kind {
            OpKind::MatMul => {
                let b = inputs[1].0;
                (Op::MatMul(a, b), matmul(&self.nodes[a].value, &self.nodes[b].value)?)
            }
            OpKind::Add => {
                let b = inputs[1].0;
                let v = zip_broadcast("add", &self.nodes[a].value, &self.nodes[b].value, |x, y| x + y)?;
                (Op::Add(a, b), v)
            }
            OpKind::Sub => {
                let b = inputs[1].0;
                let v = zip_broadcast("sub", &self.nodes[a].value, &self.nodes[b].value, |x, y| x - y)?;
                (Op::Sub(a, b), v)
            }
            OpKind::Mul => {
                let b = inputs[1].0;
                let v = zip_broadcast("mul", &self.nodes[a].value, &self.nodes[b].value, |x, y| x * y)?;
                (Op::Mul(a, b), v)
            }
            OpKind::Relu => (Op::Relu(a), map(&self.nodes[a].value, |x| if x > 0.0 { x } else { 0.0 })),
            OpKind::Exp => (Op::Exp(a), map(&self.nodes[a].value, f64::exp)),
            OpKind::Log => (Op::Log(a), map(&self.nodes[a].value, f64::ln)),
            OpKind::Square => (Op::Square(a), map(&self.nodes[a].value, |x| x * x)),
            OpKind::Sum => {
                let s = self.nodes[a].value.data().iter().sum();
                (Op::Sum(a), DenseTensor::scalar(s))
            }
            OpKind::Mean => {
                let v = &self.nodes[a].value;
                let s: f64 = v.data().iter().sum();
                (Op::Mean(a), DenseTensor::scalar(s / v.numel() as f64))
            }
            OpKind::Broadcast(shape) => {
                let src = &self.nodes[a].value;
                let out = broadcast_shape(src.shape(), shape)
                    .filter(|s| s.as_slice() == shape.as_slice())
                    .ok_or_else(|| Error::ShapeMismatch {
                        op: "broadcast",
                        lhs: src.shape().to_vec(),
                        rhs: shape.clone(),
                    })?;
                let idx = IndexMap::new(src.shape(), &out);
                let n: usize = out.iter().product();
                let data = (0..n).map(|i| src.data()[idx.get(i)]).collect();
                (Op::Broadcast(a), DenseTensor::new(out, data)?)
            }
        };
        if !value.all_finite() {
            return Err(Error::NonFinite { op: kind.name() });
        }
        Ok(self.push(op, value, needs_grad))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(OpKind::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(OpKind::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(OpKind::Mul, &[a, b])
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(OpKind::Relu, &[a])
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(OpKind::Exp, &[a])
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(OpKind::Log, &[a])
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(OpKind::Square, &[a])
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(OpKind::Sum, &[a])
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(OpKind::Mean, &[a])
    }

    pub fn broadcast(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.record(OpKind::Broadcast(shape.to_vec()), &[a])
    }

    /// Multiplies by a scalar constant.
    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        let c = self.constant(DenseTensor::scalar(factor))?;
        self.mul(a, c)
    }

    /// Populates adjoints of every node reachable backwards from `loss`.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        let shape = self.node(loss)?.value.shape().to_vec();
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::NonScalarLoss { shape });
        }
        for g in &mut self.grads {
            *g = None;
        }
        self.grads[loss.0] = Some(DenseTensor::filled(&shape, 1.0));

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(upstream) = self.grads[idx].take() else {
                continue;
            };
            match self.nodes[idx].op.clone() {
                Op::Leaf | Op::Constant => {}
                Op::MatMul(a, b) => {
                    if self.nodes[a].needs_grad {
                        let g = matmul_grad_lhs(&upstream, &self.nodes[b].value);
                        self.accumulate(a, g);
                    }
                    if self.nodes[b].needs_grad {
                        let g = matmul_grad_rhs(&self.nodes[a].value, &upstream);
                        self.accumulate(b, g);
                    }
                }
                Op::Add(a, b) => {
                    self.accumulate_reduced(a, &upstream, |g, _| g);
                    self.accumulate_reduced(b, &upstream, |g, _| g);
                }
                Op::Sub(a, b) => {
                    self.accumulate_reduced(a, &upstream, |g, _| g);
                    self.accumulate_reduced(b, &upstream, |g, _| -g);
                }
                Op::Mul(a, b) => {
                    if self.nodes[a].needs_grad {
                        let other = self.expanded(b, upstream.shape());
                        self.accumulate_reduced(a, &upstream, |g, i| g * other[i]);
                    }
                    if self.nodes[b].needs_grad {
                        let other = self.expanded(a, upstream.shape());
                        self.accumulate_reduced(b, &upstream, |g, i| g * other[i]);
                    }
                }
                Op::Relu(a) => {
                    let g = zip_same(&upstream, &self.nodes[a].value, |g, x| if x > 0.0 { g } else { 0.0 });
                    self.accumulate(a, g);
                }
                Op::Exp(a) => {
                    let g = zip_same(&upstream, &self.nodes[idx].value, |g, y| g * y);
                    self.accumulate(a, g);
                }
                Op::Log(a) => {
                    let g = zip_same(&upstream, &self.nodes[a].value, |g, x| g / x);
                    self.accumulate(a, g);
                }
                Op::Square(a) => {
                    let g = zip_same(&upstream, &self.nodes[a].value, |g, x| 2.0 * x * g);
                    self.accumulate(a, g);
                }
                Op::Sum(a) => {
                    let g = DenseTensor::filled(self.nodes[a].value.shape(), upstream.data()[0]);
                    self.accumulate(a, g);
                }
                Op::Mean(a) => {
                    let n = self.nodes[a].value.numel() as f64;
                    let g = DenseTensor::filled(self.nodes[a].value.shape(), upstream.data()[0] / n);
                    self.accumulate(a, g);
                }
                Op::Broadcast(a) => {
                    self.accumulate_reduced(a, &upstream, |g, _| g);
                }
            }
            self.grads[idx] = Some(upstream);
        }
        Ok(())
    }

    /// Adjoint of `id` after [`Tape::backward`]; zeros if `id` is not on a
    /// path to the loss.
    pub fn grad(&self, id: NodeId) -> DenseTensor {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => DenseTensor::zeros(self.nodes[id.0].value.shape()),
        }
    }

    fn accumulate(&mut self, idx: usize, g: DenseTensor) {
        match &mut self.grads[idx] {
            Some(existing) => {
                for (e, v) in existing.data_mut().iter_mut().zip(g.data()) {
                    *e += v;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    /// Reduces `f(upstream[i], i)` onto the shape of node `idx`.
    fn accumulate_reduced(&mut self, idx: usize, upstream: &DenseTensor, f: impl Fn(f64, usize) -> f64) {
        if !self.nodes[idx].needs_grad {
            return;
        }
        let target = self.nodes[idx].value.shape().to_vec();
        let map = IndexMap::new(&target, upstream.shape());
        let mut out = DenseTensor::zeros(&target);
        {
            let data = out.data_mut();
            for (i, &g) in upstream.data().iter().enumerate() {
                data[map.get(i)] += f(g, i);
            }
        }
        self.accumulate(idx, out);
    }

    /// Value of node `idx` broadcast to `shape`, as a flat vector.
    fn expanded(&self, idx: usize, shape: &[usize]) -> Vec<f64> {
        let v = &self.nodes[idx].value;
        if v.shape() == shape {
            return v.data().to_vec();
        }
        let map = IndexMap::new(v.shape(), shape);
        let n: usize = shape.iter().product();
        (0..n).map(|i| v.data()[map.get(i)]).collect()
    }
}

fn map(t: &DenseTensor, f: impl Fn(f64) -> f64) -> DenseTensor {
    let data = t.data().iter().map(|&x| f(x)).collect();
    DenseTensor::new(t.shape().to_vec(), data).expect("same shape")
}

fn zip_same(a: &DenseTensor, b: &DenseTensor, f: impl Fn(f64, f64) -> f64) -> DenseTensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    DenseTensor::new(a.shape().to_vec(), data).expect("same shape")
}

/// Numpy-style broadcast of two shapes; `None` if incompatible.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Maps flat indices of a broadcast output onto flat indices of an input.
enum IndexMap {
    Identity,
    Scalar,
    Modulo(usize),
    Table(Vec<usize>),
}

impl IndexMap {
    fn new(input: &[usize], output: &[usize]) -> Self {
        let in_n: usize = input.iter().product();
        let trimmed: Vec<usize> = input.iter().copied().skip_while(|&d| d == 1).collect();
        if input == output {
            IndexMap::Identity
        } else if in_n == 1 {
            IndexMap::Scalar
        } else if output.ends_with(&trimmed) {
            IndexMap::Modulo(in_n)
        } else {
            let rank = output.len();
            let offset = rank - input.len();
            let mut strides = vec![0usize; rank];
            let mut acc = 1;
            for i in (0..input.len()).rev() {
                strides[i + offset] = if input[i] == 1 { 0 } else { acc };
                acc *= input[i];
            }
            let n: usize = output.iter().product();
            let mut table = Vec::with_capacity(n);
            let mut counter = vec![0usize; rank];
            for _ in 0..n {
                table.push(counter.iter().zip(&strides).map(|(c, s)| c * s).sum());
                for d in (0..rank).rev() {
                    counter[d] += 1;
                    if counter[d] < output[d] {
                        break;
                    }
                    counter[d] = 0;
                }
            }
            IndexMap::Table(table)
        }
    }

    #[inline]
    fn get(&self, i: usize) -> usize {
        match self {
            IndexMap::Identity => i,
            IndexMap::Scalar => 0,
            IndexMap::Modulo(n) => i % n,
            IndexMap::Table(t) => t[i],
        }
    }
}

fn zip_broadcast(
    op: &'static str,
    a: &DenseTensor,
    b: &DenseTensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<DenseTensor> {
    if a.shape() == b.shape() {
        return Ok(zip_same(a, b, f));
    }
    let out = broadcast_shape(a.shape(), b.shape()).ok_or_else(|| Error::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    })?;
    let ma = IndexMap::new(a.shape(), &out);
    let mb = IndexMap::new(b.shape(), &out);
    let n: usize = out.iter().product();
    let (da, db) = (a.data(), b.data());
    let data = (0..n).map(|i| f(da[ma.get(i)], db[mb.get(i)])).collect();
    DenseTensor::new(out, data)
}

fn matmul(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = ad[i * k + p];
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    DenseTensor::new(vec![m, n], out)
}

/// d(A·B)/dA contracted with `upstream`: upstream · Bᵀ.
fn matmul_grad_lhs(upstream: &DenseTensor, b: &DenseTensor) -> DenseTensor {
    let (m, n) = (upstream.shape()[0], upstream.shape()[1]);
    let k = b.shape()[0];
    let (ud, bd) = (upstream.data(), b.data());
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let urow = &ud[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &bd[p * n..(p + 1) * n];
            out[i * k + p] = urow.iter().zip(brow).map(|(u, v)| u * v).sum();
        }
    }
    DenseTensor::new(vec![m, k], out).expect("matmul grad shape")
}

/// d(A·B)/dB contracted with `upstream`: Aᵀ · upstream.
fn matmul_grad_rhs(a: &DenseTensor, upstream: &DenseTensor) -> DenseTensor {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = upstream.shape()[1];
    let (ad, ud) = (a.data(), upstream.data());
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let urow = &ud[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = ad[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &u) in orow.iter_mut().zip(urow) {
                *o += aip * u;
            }
        }
    }
    DenseTensor::new(vec![k, n], out).expect("matmul grad shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> DenseTensor {
        DenseTensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_shape_rule() {
        let mut tape = Tape::new();
        let a = tape.constant(DenseTensor::zeros(&[2, 3])).unwrap();
        let b = tape.constant(DenseTensor::zeros(&[3, 4])).unwrap();
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).shape(), &[2, 4]);
    }

    #[test]
    fn matmul_mismatch_reports_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(DenseTensor::zeros(&[2, 3])).unwrap();
        let b = tape.constant(DenseTensor::zeros(&[2, 4])).unwrap();
        match tape.matmul(a, b) {
            Err(Error::ShapeMismatch { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 4]);
            }
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn relu_and_sum_values() {
        let mut tape = Tape::new();
        let x = tape.constant(DenseTensor::vector(vec![-1.0, 0.0, 2.0])).unwrap();
        let r = tape.relu(x).unwrap();
        assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.0]);
        let y = tape.constant(DenseTensor::vector(vec![1.0, 2.0, 3.0])).unwrap();
        let s = tape.sum(y).unwrap();
        assert_eq!(tape.value(s).data(), &[6.0]);
        assert!(tape.value(s).is_scalar());
    }

    #[test]
    fn linear_gradient() {
        let mut tape = Tape::new();
        let x = tape.constant(DenseTensor::vector(vec![2.0])).unwrap();
        let w = tape.leaf(DenseTensor::vector(vec![3.0])).unwrap();
        let p = tape.mul(w, x).unwrap();
        let loss = tape.sum(p).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).data(), &[2.0]);
    }

    #[test]
    fn dead_relu_has_zero_gradient() {
        for w0 in [-1.0, 0.0] {
            let mut tape = Tape::new();
            let w = tape.leaf(DenseTensor::vector(vec![w0])).unwrap();
            let r = tape.relu(w).unwrap();
            let loss = tape.sum(r).unwrap();
            tape.backward(loss).unwrap();
            assert_eq!(tape.grad(w).data(), &[0.0]);
        }
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let w = tape.leaf(DenseTensor::vector(vec![1.0, 2.0])).unwrap();
        assert!(matches!(tape.backward(w), Err(Error::NonScalarLoss { .. })));
    }

    #[test]
    fn non_finite_rejected_with_op() {
        let mut tape = Tape::new();
        let w = tape.leaf(DenseTensor::vector(vec![0.0])).unwrap();
        assert!(matches!(tape.log(w), Err(Error::NonFinite { op: "log" })));
        let big = tape.leaf(DenseTensor::vector(vec![1000.0])).unwrap();
        assert!(matches!(tape.exp(big), Err(Error::NonFinite { op: "exp" })));
    }

    #[test]
    fn unreachable_leaf_gets_zero_adjoint() {
        let mut tape = Tape::new();
        let used = tape.leaf(DenseTensor::vector(vec![1.0, 2.0])).unwrap();
        let unused = tape.leaf(DenseTensor::vector(vec![5.0, 6.0])).unwrap();
        let _side = tape.square(unused).unwrap();
        let loss = tape.sum(used).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(unused).data(), &[0.0, 0.0]);
        assert_eq!(tape.grad(used).data(), &[1.0, 1.0]);
    }

    #[test]
    fn bias_broadcast_reduces_gradient() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0])).unwrap();
        let b = tape.leaf(DenseTensor::vector(vec![0.5, -0.5, 1.0])).unwrap();
        let y = tape.add(x, b).unwrap();
        assert_eq!(tape.value(y).data(), &[1.5, 1.5, 4.0, 4.5, 4.5, 7.0]);
        let loss = tape.sum(y).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(b).data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn general_broadcast_column_times_row() {
        let mut tape = Tape::new();
        let col = tape.leaf(t(&[2, 1], &[1.0, 2.0])).unwrap();
        let row = tape.leaf(t(&[1, 3], &[1.0, 10.0, 100.0])).unwrap();
        let p = tape.mul(col, row).unwrap();
        assert_eq!(tape.value(p).shape(), &[2, 3]);
        assert_eq!(tape.value(p).data(), &[1.0, 10.0, 100.0, 2.0, 20.0, 200.0]);
        let loss = tape.sum(p).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(col).data(), &[111.0, 111.0]);
        assert_eq!(tape.grad(row).data(), &[3.0, 3.0, 3.0]);
    }

    #[test]
    fn explicit_broadcast_op() {
        let mut tape = Tape::new();
        let v = tape.leaf(DenseTensor::vector(vec![1.0, 2.0])).unwrap();
        let b = tape.broadcast(v, &[3, 2]).unwrap();
        assert_eq!(tape.value(b).data(), &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let loss = tape.mean(b).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(v).data(), &[0.5, 0.5]);
        assert!(tape.broadcast(v, &[3, 4]).is_err());
    }

    #[test]
    fn reused_node_accumulates() {
        // loss = sum(w * w) via mul with itself -> 2w
        let mut tape = Tape::new();
        let w = tape.leaf(DenseTensor::vector(vec![3.0, -1.0])).unwrap();
        let p = tape.mul(w, w).unwrap();
        let loss = tape.sum(p).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).data(), &[6.0, -2.0]);
    }

    #[test]
    fn arity_checked() {
        let mut tape = Tape::new();
        let w = tape.leaf(DenseTensor::scalar(1.0)).unwrap();
        assert!(tape.record(OpKind::Add, &[w]).is_err());
        assert!(tape.record(OpKind::Relu, &[NodeId(99)]).is_err());
    }
}
