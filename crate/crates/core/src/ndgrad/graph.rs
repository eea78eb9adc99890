//! Dynamic tape. Nodes are appended in evaluation order, so the tape order is
//! already a topological order and backward is a single reverse sweep.

use serde::{Deserialize, Serialize};

use super::array::{gemm, Layout};
use super::{DenseArray, NdError, ParamSet};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Softplus,
    Exp,
    Log,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Softplus => softplus(x),
            Activation::Exp => x.exp(),
            Activation::Log => x.ln(),
        }
    }

    /// d(out)/d(in) given the input `x` and the cached output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Softplus => sigmoid(x),
            Activation::Exp => y,
            Activation::Log => 1.0 / x,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Row-wise `log Σ exp`, stable under large inputs. `-inf` entries are
/// allowed; an all `-inf` row yields `-inf`.
pub fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    /// `a[m×n] + row[1×n]`
    AddRow(Var, Var),
    /// `a[m×n] ⊙ col[m×1]`
    MulCol(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Act(Var, Activation),
    Softmax(Var),
    LogSoftmax(Var),
    LogSumExp(Var),
    SumRows(Var),
    Sum(Var),
    Mean(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
}

#[derive(Debug)]
struct Node {
    value: DenseArray,
    op: Op,
    /// Whether the loss gradient has to reach this node.
    grad: bool,
}

#[derive(Debug, Clone, Copy)]
struct Binding {
    node: usize,
    set: u64,
    index: usize,
}

/// Single-use computation graph. Build it with a forward pass, call
/// [`Graph::backward`] once, then drop it.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    bindings: Vec<Binding>,
    /// Parameter sets read as constants.
    frozen: Vec<u64>,
    consumed: bool,
}

/// Result of a backward sweep.
#[derive(Debug)]
pub struct Gradients {
    node_grads: Vec<Option<Vec<f64>>>,
    bindings: Vec<Binding>,
}

impl Gradients {
    /// Gradient of the loss with respect to any node, `None` when the loss
    /// does not depend on it.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.node_grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradients of every parameter of `set` used in the graph into
    /// `set`'s gradient buffers. Callers zero those buffers beforehand.
    pub fn accumulate_into(&self, set: &mut ParamSet) -> usize {
        let mut touched = 0;
        let uid = set.uid();
        for b in self.bindings.iter().filter(|b| b.set == uid) {
            if let Some(g) = &self.node_grads[b.node] {
                let dst = set.grad_mut(b.index);
                for (d, s) in dst.iter_mut().zip(g) {
                    *d += s;
                }
                touched += 1;
            }
        }
        touched
    }
}

fn shape_err(op: &'static str, a: &DenseArray, b: &DenseArray) -> NdError {
    NdError::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn add_into(grads: &mut [Option<Vec<f64>>], need: &[bool], at: usize, src: impl IntoIterator<Item = f64>, len: usize) {
    if !need[at] {
        return;
    }
    match &mut grads[at] {
        Some(buf) => {
            for (d, s) in buf.iter_mut().zip(src) {
                *d += s;
            }
        }
        slot => {
            let buf: Vec<f64> = src.into_iter().collect();
            debug_assert_eq!(buf.len(), len);
            *slot = Some(buf);
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &DenseArray {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: DenseArray, op: Op) -> Var {
        let g = |v: &Var| self.nodes[v.0].grad;
        let grad = match &op {
            Op::Leaf => unreachable!("leaves are pushed by leaf()"),
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::AddRow(a, b)
            | Op::MulCol(a, b) => g(a) || g(b),
            Op::Scale(a, _)
            | Op::Offset(a)
            | Op::Act(a, _)
            | Op::Softmax(a)
            | Op::LogSoftmax(a)
            | Op::LogSumExp(a)
            | Op::SumRows(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Slice(a, _) => g(a),
            Op::Concat(parts) => parts.iter().any(g),
        };
        self.nodes.push(Node { value, op, grad });
        Var(self.nodes.len() - 1)
    }

    fn leaf(&mut self, value: DenseArray, grad: bool) -> Var {
        self.nodes.push(Node {
            value: value.as_matrix(),
            op: Op::Leaf,
            grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Input that is not a parameter. Gradients still flow to it and can be
    /// read back with [`Gradients::wrt`].
    pub fn constant(&mut self, value: DenseArray) -> Var {
        self.leaf(value, true)
    }

    /// Input that no gradient is needed for. Backward skips it and anything
    /// computed only from such inputs.
    pub fn input(&mut self, value: DenseArray) -> Var {
        self.leaf(value, false)
    }

    /// Reads every later [`param`](Self::param) of `set` as an
    /// [`input`](Self::input): no gradient is computed or accumulated for it.
    pub fn freeze(&mut self, set: &ParamSet) {
        self.frozen.push(set.uid());
    }

    /// Leaf bound to parameter `index` of `set`. The value is copied, so the
    /// set stays free for other readers while the graph lives.
    pub fn param(&mut self, set: &ParamSet, index: usize) -> Var {
        let value = set.value(index).clone();
        if self.frozen.contains(&set.uid()) {
            return self.input(value);
        }
        let v = self.leaf(value, true);
        self.bindings.push(Binding {
            node: v.0,
            set: set.uid(),
            index,
        });
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    fn zip_same(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, NdError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err(name, va, vb));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = DenseArray::new(va.shape().to_vec(), data)?;
        Ok(self.push(out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        self.zip_same("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    /// Broadcasts a `1 × n` row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NdError> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(shape_err("add_row", va, vr));
        }
        let n = va.cols();
        let mut data = va.data().to_vec();
        for chunk in data.chunks_exact_mut(n) {
            for (d, r) in chunk.iter_mut().zip(vr.data()) {
                *d += r;
            }
        }
        let out = DenseArray::matrix(va.rows(), n, data)?;
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    /// Scales each row of `a` by the matching entry of the `m × 1` column.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var, NdError> {
        let (va, vc) = (self.value(a), self.value(col));
        if vc.cols() != 1 || vc.rows() != va.rows() {
            return Err(shape_err("mul_col", va, vc));
        }
        let n = va.cols();
        let data = va
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x * vc.data()[i / n])
            .collect();
        let out = DenseArray::matrix(va.rows(), n, data)?;
        Ok(self.push(out, Op::MulCol(a, col)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x * k);
        self.push(out, Op::Scale(a, k))
    }

    pub fn offset(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x + k);
        self.push(out, Op::Offset(a))
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Result<Var, NdError> {
        let va = self.value(a);
        if kind == Activation::Log {
            if let Some(&bad) = va.data().iter().find(|&&x| !(x > 0.0)) {
                return Err(NdError::Domain {
                    op: "log",
                    value: bad,
                });
            }
        }
        let out = va.map(|x| kind.apply(x));
        Ok(self.push(out, Op::Act(a, kind)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Relu).expect("relu is total")
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Tanh).expect("tanh is total")
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Sigmoid).expect("sigmoid is total")
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Softplus).expect("softplus is total")
    }

    fn rowwise(&self, a: Var, f: impl Fn(&[f64], &mut [f64])) -> DenseArray {
        let va = self.value(a);
        let (m, n) = (va.rows(), va.cols());
        let mut data = vec![0.0; m * n];
        for r in 0..m {
            f(va.row_slice(r), &mut data[r * n..(r + 1) * n]);
        }
        DenseArray::matrix(m, n, data).expect("same shape")
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax(&mut self, a: Var) -> Var {
        let out = self.rowwise(a, softmax_into);
        self.push(out, Op::Softmax(a))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let out = self.rowwise(a, |x, y| {
            let lse = log_sum_exp(x);
            for (o, &v) in y.iter_mut().zip(x) {
                *o = v - lse;
            }
        });
        self.push(out, Op::LogSoftmax(a))
    }

    /// Row-wise log-sum-exp, `m × n → m × 1`.
    pub fn log_sum_exp(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let data = (0..va.rows()).map(|r| log_sum_exp(va.row_slice(r))).collect();
        let out = DenseArray::matrix(va.rows(), 1, data).expect("column");
        self.push(out, Op::LogSumExp(a))
    }

    /// `m × n → m × 1`
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let data = (0..va.rows()).map(|r| va.row_slice(r).iter().sum()).collect();
        let out = DenseArray::matrix(va.rows(), 1, data).expect("column");
        self.push(out, Op::SumRows(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(DenseArray::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let s = va.data().iter().sum::<f64>() / va.len().max(1) as f64;
        self.push(DenseArray::scalar(s), Op::Mean(a))
    }

    /// Concatenates along columns; all parts need the same row count.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NdError> {
        let first = parts.first().ok_or(NdError::Contract("concat of nothing"))?;
        let m = self.value(*first).rows();
        let mut n = 0;
        for p in parts {
            let v = self.value(*p);
            if v.rows() != m {
                return Err(shape_err("concat", self.value(*first), v));
            }
            n += v.cols();
        }
        let mut data = Vec::with_capacity(m * n);
        for r in 0..m {
            for p in parts {
                data.extend_from_slice(self.value(*p).row_slice(r));
            }
        }
        let out = DenseArray::matrix(m, n, data)?;
        Ok(self.push(out, Op::Concat(parts.to_vec())))
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, NdError> {
        let va = self.value(a);
        if start > end || end > va.cols() {
            return Err(NdError::Shape {
                op: "slice_cols",
                lhs: va.shape().to_vec(),
                rhs: vec![start, end],
            });
        }
        let m = va.rows();
        let mut data = Vec::with_capacity(m * (end - start));
        for r in 0..m {
            data.extend_from_slice(&va.row_slice(r)[start..end]);
        }
        let out = DenseArray::matrix(m, end - start, data)?;
        Ok(self.push(out, Op::Slice(a, start)))
    }

    /// Reverse sweep from a `1 × 1` loss. A graph can be swept once; a second
    /// call returns [`NdError::GraphConsumed`].
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, NdError> {
        if self.consumed {
            return Err(NdError::GraphConsumed);
        }
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(NdError::NonScalarLoss(lv.shape().to_vec()));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        let need: Vec<bool> = self.nodes.iter().map(|n| n.grad).collect();
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.grad {
                continue;
            }
            let out = &node.value;
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                    if self.nodes[a.0].grad {
                        let ga = grads[a.0].get_or_insert_with(|| vec![0.0; m * k]);
                        gemm(m, n, k, 1.0, &g, Layout::N, vb.data(), Layout::T, 1.0, ga);
                    }
                    if self.nodes[b.0].grad {
                        let gb = grads[b.0].get_or_insert_with(|| vec![0.0; k * n]);
                        gemm(k, m, n, 1.0, va.data(), Layout::T, &g, Layout::N, 1.0, gb);
                    }
                }
                Op::Add(a, b) => {
                    add_into(&mut grads, &need, a.0, g.iter().copied(), g.len());
                    add_into(&mut grads, &need, b.0, g.iter().copied(), g.len());
                }
                Op::Sub(a, b) => {
                    add_into(&mut grads, &need, a.0, g.iter().copied(), g.len());
                    add_into(&mut grads, &need, b.0, g.iter().map(|v| -v), g.len());
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                    add_into(&mut grads, &need, a.0, g.iter().zip(vb).map(|(g, y)| g * y), g.len());
                    add_into(&mut grads, &need, b.0, g.iter().zip(va).map(|(g, x)| g * x), g.len());
                }
                Op::Div(a, b) => {
                    let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                    add_into(&mut grads, &need, a.0, g.iter().zip(vb).map(|(g, y)| g / y), g.len());
                    let db = g.iter().zip(va.iter().zip(vb)).map(|(g, (x, y))| -g * x / (y * y));
                    add_into(&mut grads, &need, b.0, db, g.len());
                }
                Op::AddRow(a, row) => {
                    add_into(&mut grads, &need, a.0, g.iter().copied(), g.len());
                    let n = out.cols();
                    if need[row.0] {
                        let gr = grads[row.0].get_or_insert_with(|| vec![0.0; n]);
                        for chunk in g.chunks_exact(n) {
                            for (d, v) in gr.iter_mut().zip(chunk) {
                                *d += v;
                            }
                        }
                    }
                }
                Op::MulCol(a, col) => {
                    let (va, vc) = (self.value(*a), self.value(*col));
                    let n = va.cols();
                    let ga = g.iter().enumerate().map(|(j, v)| v * vc.data()[j / n]);
                    add_into(&mut grads, &need, a.0, ga, g.len());
                    let gc = grads[col.0].get_or_insert_with(|| vec![0.0; vc.len()]);
                    for (j, v) in g.iter().enumerate() {
                        gc[j / n] += v * va.data()[j];
                    }
                }
                Op::Scale(a, k) => add_into(&mut grads, &need, a.0, g.iter().map(|v| v * k), g.len()),
                Op::Offset(a) => add_into(&mut grads, &need, a.0, g.iter().copied(), g.len()),
                Op::Act(a, kind) => {
                    let x = self.value(*a).data();
                    let d = g
                        .iter()
                        .zip(x.iter().zip(out.data()))
                        .map(|(g, (&x, &y))| g * kind.derivative(x, y));
                    add_into(&mut grads, &need, a.0, d, g.len());
                }
                Op::Softmax(a) => {
                    let n = out.cols();
                    let mut d = vec![0.0; g.len()];
                    for r in 0..out.rows() {
                        let y = out.row_slice(r);
                        let gr = &g[r * n..(r + 1) * n];
                        let dot: f64 = gr.iter().zip(y).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            d[r * n + j] = y[j] * (gr[j] - dot);
                        }
                    }
                    add_into(&mut grads, &need, a.0, d, g.len());
                }
                Op::LogSoftmax(a) => {
                    let n = out.cols();
                    let mut d = vec![0.0; g.len()];
                    for r in 0..out.rows() {
                        let y = out.row_slice(r);
                        let gr = &g[r * n..(r + 1) * n];
                        let gsum: f64 = gr.iter().sum();
                        for j in 0..n {
                            d[r * n + j] = gr[j] - y[j].exp() * gsum;
                        }
                    }
                    add_into(&mut grads, &need, a.0, d, g.len());
                }
                Op::LogSumExp(a) => {
                    let va = self.value(*a);
                    let n = va.cols();
                    let mut d = vec![0.0; va.len()];
                    for r in 0..va.rows() {
                        let lse = out.data()[r];
                        for (j, &x) in va.row_slice(r).iter().enumerate() {
                            let w = if lse == f64::NEG_INFINITY { 0.0 } else { (x - lse).exp() };
                            d[r * n + j] = g[r] * w;
                        }
                    }
                    add_into(&mut grads, &need, a.0, d, va.len());
                }
                Op::SumRows(a) => {
                    let va = self.value(*a);
                    let n = va.cols();
                    add_into(&mut grads, &need, a.0, (0..va.len()).map(|j| g[j / n]), va.len());
                }
                Op::Sum(a) => {
                    let len = self.value(*a).len();
                    add_into(&mut grads, &need, a.0, std::iter::repeat_n(g[0], len), len);
                }
                Op::Mean(a) => {
                    let len = self.value(*a).len();
                    let v = g[0] / len.max(1) as f64;
                    add_into(&mut grads, &need, a.0, std::iter::repeat_n(v, len), len);
                }
                Op::Concat(parts) => {
                    let n = out.cols();
                    let mut offset = 0;
                    for p in parts {
                        let vp = self.value(*p);
                        let w = vp.cols();
                        let d = (0..vp.len()).map(|j| g[(j / w) * n + offset + j % w]);
                        add_into(&mut grads, &need, p.0, d, vp.len());
                        offset += w;
                    }
                }
                Op::Slice(a, start) => {
                    let va = self.value(*a);
                    let (n, w) = (va.cols(), out.cols());
                    let ga = grads[a.0].get_or_insert_with(|| vec![0.0; va.len()]);
                    for (j, v) in g.iter().enumerate() {
                        ga[(j / w) * n + start + j % w] += v;
                    }
                }
            }
            grads[i] = Some(g);
        }

        Ok(Gradients {
            node_grads: grads,
            bindings: self.bindings.clone(),
        })
    }
}

pub(crate) fn softmax_into(x: &[f64], y: &mut [f64]) {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &v) in y.iter_mut().zip(x) {
        *o = (v - m).exp();
        s += *o;
    }
    for o in y.iter_mut() {
        *o /= s;
    }
}

/// Softmax of a plain slice.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    softmax_into(x, &mut y);
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_graph(x: f64) -> (Graph, Var) {
        let mut g = Graph::new();
        let v = g.constant(DenseArray::scalar(x));
        (g, v)
    }

    #[test]
    fn square_gradient() {
        let (mut g, x) = scalar_graph(3.0);
        let y = g.mul(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.wrt(x).unwrap(), &[6.0]);
    }

    #[test]
    fn constant_loss_has_no_gradient() {
        let (mut g, x) = scalar_graph(3.0);
        let c = g.constant(DenseArray::scalar(5.0));
        let grads = g.backward(c).unwrap();
        assert!(grads.wrt(x).is_none());
    }

    #[test]
    fn inputs_and_frozen_sets_get_no_gradient() {
        let mut set = ParamSet::new();
        set.add("w", DenseArray::matrix(2, 1, vec![1.0, -2.0]).unwrap());
        let mut other = ParamSet::new();
        other.add("v", DenseArray::matrix(1, 1, vec![3.0]).unwrap());
        let x = DenseArray::matrix(1, 2, vec![0.5, 0.25]).unwrap();

        let mut g = Graph::new();
        g.freeze(&other);
        let xi = g.input(x.clone());
        let w = g.param(&set, 0);
        let v = g.param(&other, 0);
        let h = g.matmul(xi, w).unwrap();
        let y = g.mul(h, v).unwrap();
        let grads = g.backward(y).unwrap();
        assert!(grads.wrt(xi).is_none());
        assert!(grads.wrt(v).is_none());
        assert_eq!(grads.wrt(w).unwrap(), &[1.5, 0.75]);
        let (mut s2, mut o2) = (set.clone(), other.clone());
        assert_eq!(grads.accumulate_into(&mut o2), 0);
        assert_eq!(grads.accumulate_into(&mut s2), 0, "clones carry a new uid");
        let mut s3 = set;
        assert_eq!(grads.accumulate_into(&mut s3), 1);
        assert_eq!(s3.grad(0), &[1.5, 0.75]);
    }

    #[test]
    fn second_backward_is_rejected() {
        let (mut g, x) = scalar_graph(2.0);
        let y = g.mul(x, x).unwrap();
        g.backward(y).unwrap();
        assert!(matches!(g.backward(y), Err(NdError::GraphConsumed)));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let x = g.constant(DenseArray::row(vec![1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(NdError::NonScalarLoss(_))));
    }

    #[test]
    fn activations_at_reference_points() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert!(softplus(1000.0).is_finite());
    }

    #[test]
    fn log_rejects_non_positive() {
        let (mut g, x) = scalar_graph(0.0);
        let err = g.activation(x, Activation::Log).unwrap_err();
        assert!(matches!(err, NdError::Domain { .. }));
    }

    #[test]
    fn tanh_slope_at_origin() {
        let (mut g, x) = scalar_graph(0.0);
        let y = g.tanh(x);
        let grads = g.backward(y).unwrap();
        let h = 1e-6;
        let fd = ((h as f64).tanh() - (-h as f64).tanh()) / (2.0 * h);
        assert_eq!(grads.wrt(x).unwrap()[0], 1.0);
        assert!((fd - 1.0).abs() < 1e-10);
    }

    #[test]
    fn softmax_reference_values() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        assert_eq!(softmax(&[1000.0, 1000.0]), vec![0.5, 0.5]);
        // exp-normalize evaluated by hand: e^{k-3} / (e^-2 + e^-1 + 1)
        let z = (-2f64).exp() + (-1f64).exp() + 1.0;
        let want = [(-2f64).exp() / z, (-1f64).exp() / z, 1.0 / z];
        for (a, b) in softmax(&[1.0, 2.0, 3.0]).iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_reports_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(DenseArray::zeros(&[2, 3]));
        let b = g.constant(DenseArray::zeros(&[2, 3]));
        let msg = g.matmul(a, b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]"));
    }
}
