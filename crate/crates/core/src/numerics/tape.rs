//! Eager reverse-mode differentiation over dense matrices.
//!
//! Every op computes its value immediately; `backward` walks the node list in
//! reverse and accumulates adjoints. Parameters live in a [`ParamSet`] borrowed
//! by the graph, so building a graph never copies weights.

use std::borrow::Cow;
use std::sync::Arc;

use super::array::gemm_acc;
use super::ops::{lse_unchecked, sigmoid, softmax_in_place, softplus};
use super::{NumArray, Real};

/// Named parameter tensors of one model.
#[derive(Clone, Debug, Default)]
pub struct ParamSet<T> {
    names: Vec<String>,
    values: Vec<NumArray<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: NumArray<T>) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &NumArray<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut NumArray<T> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &NumArray<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(NumArray::len).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            values: self.values.iter().map(NumArray::cast).collect(),
        }
    }
}

/// Gradients indexed like the owning [`ParamSet`]; `None` means identically zero.
#[derive(Clone, Debug)]
pub struct Grads<T> {
    pub slots: Vec<Option<NumArray<T>>>,
}

impl<T: Real> Grads<T> {
    pub fn get(&self, id: ParamId) -> Option<&NumArray<T>> {
        self.slots[id.0].as_ref()
    }

    pub fn global_norm(&self) -> f64 {
        self.slots
            .iter()
            .flatten()
            .map(|g| g.data().iter().map(|x| x.f() * x.f()).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.slots.iter().flatten().all(NumArray::is_finite)
    }

    pub fn scale(&mut self, s: T) {
        for g in self.slots.iter_mut().flatten() {
            g.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op<T> {
    Const,
    Param(ParamId),
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `a[m,n] + b[n]`
    AddRow(Var, Var),
    /// `a[m,n] * c[m]`, each row scaled
    MulCol(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Softplus(Var),
    Square(Var),
    Gather { table: Var, ids: Arc<Vec<usize>> },
    SliceCols { a: Var, start: usize },
    SliceRows { a: Var, start: usize },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    /// `out[i] = log_softmax(a[i])[targets[i]]`; row log-normalizers cached.
    LogSoftmaxPick { a: Var, targets: Arc<Vec<usize>>, lse: Vec<T> },
    LogSumExpRows(Var),
    /// `out = a; out[i, cols[j]] += gate[i] * b[i or 0, j]`
    ScatterAddGated { a: Var, b: Var, cols: Arc<Vec<usize>>, gate: Arc<Vec<T>> },
    Sum(Var),
    RowSum(Var),
    Dot(Var, Var),
}

struct Node<'a, T: Real> {
    value: Cow<'a, NumArray<T>>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Graph<'a, T: Real> {
    params: &'a ParamSet<T>,
    nodes: Vec<Node<'a, T>>,
}

impl<'a, T: Real> Graph<'a, T> {
    pub fn new(params: &'a ParamSet<T>) -> Self {
        Graph {
            params,
            nodes: Vec::with_capacity(1024),
        }
    }

    pub fn params(&self) -> &'a ParamSet<T> {
        self.params
    }

    pub fn value(&self, v: Var) -> &NumArray<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: NumArray<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: NumArray<T>) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op: Op::Const,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let params = self.params;
        self.nodes.push(Node {
            value: Cow::Borrowed(params.get(id)),
            op: Op::Param(id),
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.matmul_t(a, false, b, false)
    }

    pub fn matmul_t(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Var {
        let out = self
            .value(a)
            .matmul(self.value(b), ta, tb)
            .expect("matmul shape mismatch");
        self.push(out, Op::MatMul { a, b, ta, tb }, &[a, b])
    }

    fn zip(&mut self, a: Var, b: Var, op: Op<T>, f: impl Fn(T, T) -> T) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.len(), y.len(), "elementwise shape mismatch {:?} {:?}", x.shape(), y.shape());
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        let out = NumArray::from_vec(x.shape(), data).unwrap();
        self.push(out, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Add(a, b), |p, q| p + q)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Sub(a, b), |p, q| p - q)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Mul(a, b), |p, q| p * q)
    }

    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (x, bias) = (self.value(a), self.value(b));
        let n = x.cols();
        assert_eq!(bias.len(), n, "bias length mismatch");
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (o, &bv) in out.row_mut(r).iter_mut().zip(bias.data()) {
                *o += bv;
            }
        }
        self.push(out, Op::AddRow(a, b), &[a, b])
    }

    pub fn mul_col(&mut self, a: Var, c: Var) -> Var {
        let (x, col) = (self.value(a), self.value(c));
        assert_eq!(col.len(), x.rows(), "column scale length mismatch");
        let mut out = x.clone();
        for r in 0..out.rows() {
            let s = col.data()[r];
            out.row_mut(r).iter_mut().for_each(|o| *o *= s);
        }
        self.push(out, Op::MulCol(a, c), &[a, c])
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale(a, s), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, s: T) -> Var {
        let out = self.value(a).map(|x| x + s);
        self.push(out, Op::AddScalar(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(T::tanh);
        self.push(out, Op::Tanh(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(T::exp);
        self.push(out, Op::Exp(a), &[a])
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).map(T::ln);
        self.push(out, Op::Log(a), &[a])
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(softplus);
        self.push(out, Op::Softplus(a), &[a])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * x);
        self.push(out, Op::Square(a), &[a])
    }

    /// Rows of `table` selected by `ids` (embedding lookup).
    pub fn gather(&mut self, table: Var, ids: Arc<Vec<usize>>) -> Var {
        let t = self.value(table);
        let c = t.cols();
        let mut data = Vec::with_capacity(ids.len() * c);
        for &i in ids.iter() {
            data.extend_from_slice(t.row(i));
        }
        let out = NumArray::from_vec(&[ids.len(), c], data).unwrap();
        self.push(out, Op::Gather { table, ids }, &[table])
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        let m = x.rows();
        let mut data = Vec::with_capacity(m * len);
        for r in 0..m {
            data.extend_from_slice(&x.row(r)[start..start + len]);
        }
        let out = NumArray::from_vec(&[m, len], data).unwrap();
        self.push(out, Op::SliceCols { a, start }, &[a])
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        let c = x.cols();
        let data = x.data()[start * c..(start + len) * c].to_vec();
        let out = NumArray::from_vec(&[len, c], data).unwrap();
        self.push(out, Op::SliceRows { a, start }, &[a])
    }

    pub fn concat_rows(&mut self, parts: Vec<Var>) -> Var {
        let c = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in &parts {
            let x = self.value(p);
            assert_eq!(x.cols(), c, "concat_rows width mismatch");
            rows += x.rows();
            data.extend_from_slice(x.data());
        }
        let out = NumArray::from_vec(&[rows, c], data).unwrap();
        let inputs = parts.clone();
        self.push(out, Op::ConcatRows(parts), &inputs)
    }

    /// Column concatenation; rank-1 inputs of length `m` count as `[m, 1]`.
    pub fn concat_cols(&mut self, parts: Vec<Var>) -> Var {
        let m = col_rows(self.value(parts[0]));
        let widths: Vec<usize> = parts.iter().map(|&p| col_width(self.value(p))).collect();
        let total: usize = widths.iter().sum();
        let mut out = NumArray::zeros(&[m, total]);
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let x = self.value(p);
            assert_eq!(col_rows(x), m, "concat_cols height mismatch");
            for r in 0..m {
                out.row_mut(r)[off..off + w].copy_from_slice(&x.data()[r * w..(r + 1) * w]);
            }
            off += w;
        }
        let inputs = parts.clone();
        self.push(out, Op::ConcatCols(parts), &inputs)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r));
        }
        self.push(out, Op::SoftmaxRows(a), &[a])
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for r in 0..out.rows() {
            let z = lse_unchecked(out.row(r));
            out.row_mut(r).iter_mut().for_each(|x| *x -= z);
        }
        self.push(out, Op::LogSoftmaxRows(a), &[a])
    }

    /// Per-row log-probability of the target column.
    pub fn log_softmax_pick(&mut self, a: Var, targets: Arc<Vec<usize>>) -> Var {
        let x = self.value(a);
        assert_eq!(targets.len(), x.rows());
        let lse: Vec<T> = (0..x.rows()).map(|r| lse_unchecked(x.row(r))).collect();
        let data = (0..x.rows())
            .map(|r| x.row(r)[targets[r]] - lse[r])
            .collect();
        let out = NumArray::vector(data);
        self.push(out, Op::LogSoftmaxPick { a, targets, lse }, &[a])
    }

    pub fn log_sum_exp_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let data = (0..x.rows()).map(|r| lse_unchecked(x.row(r))).collect();
        let out = NumArray::vector(data);
        self.push(out, Op::LogSumExpRows(a), &[a])
    }

    pub fn scatter_add_gated(
        &mut self,
        a: Var,
        b: Var,
        cols: Arc<Vec<usize>>,
        gate: Arc<Vec<T>>,
    ) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        let m = x.rows();
        assert_eq!(gate.len(), m);
        assert_eq!(y.cols(), cols.len());
        assert!(y.rows() == m || y.rows() == 1);
        let broadcast = y.rows() == 1;
        let mut out = x.clone();
        for r in 0..m {
            let g = gate[r];
            if g == T::zero() {
                continue;
            }
            let src = y.row(if broadcast { 0 } else { r });
            let dst = out.row_mut(r);
            for (&c, &v) in cols.iter().zip(src) {
                dst[c] += g * v;
            }
        }
        self.push(out, Op::ScatterAddGated { a, b, cols, gate }, &[a, b])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = NumArray::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a), &[a])
    }

    pub fn row_sum(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let data = (0..x.rows()).map(|r| x.row(r).iter().copied().sum()).collect();
        let out = NumArray::vector(data);
        self.push(out, Op::RowSum(a), &[a])
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.len(), y.len(), "dot length mismatch");
        let s = x.data().iter().zip(y.data()).map(|(&p, &q)| p * q).sum();
        let out = NumArray::scalar(s);
        self.push(out, Op::Dot(a, b), &[a, b])
    }

    /// Gradients of the scalar `loss` with respect to every parameter reached.
    pub fn backward(&self, loss: Var) -> Grads<T> {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let n = loss.0 + 1;
        let mut adj: Vec<Option<NumArray<T>>> = (0..n).map(|_| None).collect();
        adj[loss.0] = Some(NumArray::full(self.value(loss).shape(), T::one()));
        let mut grads = Grads {
            slots: (0..self.params.len()).map(|_| None).collect(),
        };

        for i in (0..n).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.propagate(node, &g, &mut adj, &mut grads);
        }
        grads
    }

    fn propagate(
        &self,
        node: &Node<'a, T>,
        g: &NumArray<T>,
        adj: &mut [Option<NumArray<T>>],
        grads: &mut Grads<T>,
    ) {
        let val = |v: Var| -> &NumArray<T> { &self.nodes[v.0].value };
        let wants = |v: Var| self.nodes[v.0].needs_grad;
        let out = &*node.value;
        match &node.op {
            Op::Const => {}
            Op::Param(id) => match &mut grads.slots[id.0] {
                Some(acc) => acc.add_assign(g),
                slot @ None => *slot = Some(g.clone()),
            },
            &Op::MatMul { a, b, ta, tb } => {
                let (x, y) = (val(a), val(b));
                if wants(a) {
                    let buf = slot(adj, a, x.shape());
                    // d op(A) = G op(B)^T; when A was transposed, dA = op(B) G^T
                    if ta {
                        gemm_acc(T::one(), y, tb, g, true, T::one(), buf.data_mut());
                    } else {
                        gemm_acc(T::one(), g, false, y, !tb, T::one(), buf.data_mut());
                    }
                }
                if wants(b) {
                    let buf = slot(adj, b, y.shape());
                    if tb {
                        gemm_acc(T::one(), g, true, x, ta, T::one(), buf.data_mut());
                    } else {
                        gemm_acc(T::one(), x, !ta, g, false, T::one(), buf.data_mut());
                    }
                }
            }
            &Op::Add(a, b) => {
                if wants(a) {
                    acc_into(adj, a, g, |_, gv| gv);
                }
                if wants(b) {
                    acc_into(adj, b, g, |_, gv| gv);
                }
            }
            &Op::Sub(a, b) => {
                if wants(a) {
                    acc_into(adj, a, g, |_, gv| gv);
                }
                if wants(b) {
                    acc_into(adj, b, g, |_, gv| -gv);
                }
            }
            &Op::Mul(a, b) => {
                if wants(a) {
                    let y = val(b);
                    acc_into(adj, a, g, |k, gv| gv * y.data()[k]);
                }
                if wants(b) {
                    let x = val(a);
                    acc_into(adj, b, g, |k, gv| gv * x.data()[k]);
                }
            }
            &Op::AddRow(a, b) => {
                if wants(a) {
                    acc_into(adj, a, g, |_, gv| gv);
                }
                if wants(b) {
                    let buf = slot(adj, b, val(b).shape());
                    for r in 0..g.rows() {
                        for (o, &gv) in buf.data_mut().iter_mut().zip(g.row(r)) {
                            *o += gv;
                        }
                    }
                }
            }
            &Op::MulCol(a, c) => {
                let (x, col) = (val(a), val(c));
                let w = x.cols();
                if wants(a) {
                    acc_into(adj, a, g, |k, gv| gv * col.data()[k / w]);
                }
                if wants(c) {
                    let buf = slot(adj, c, col.shape());
                    for r in 0..x.rows() {
                        let s: T = x.row(r).iter().zip(g.row(r)).map(|(&p, &q)| p * q).sum();
                        buf.data_mut()[r] += s;
                    }
                }
            }
            &Op::Scale(a, s) => acc_into(adj, a, g, |_, gv| gv * s),
            &Op::AddScalar(a) => acc_into(adj, a, g, |_, gv| gv),
            &Op::Sigmoid(a) => {
                acc_into(adj, a, g, |k, gv| {
                    let y = out.data()[k];
                    gv * y * (T::one() - y)
                })
            }
            &Op::Tanh(a) => {
                acc_into(adj, a, g, |k, gv| {
                    let y = out.data()[k];
                    gv * (T::one() - y * y)
                })
            }
            &Op::Exp(a) => acc_into(adj, a, g, |k, gv| gv * out.data()[k]),
            &Op::Log(a) => {
                let x = val(a);
                acc_into(adj, a, g, |k, gv| gv / x.data()[k])
            }
            &Op::Softplus(a) => {
                let x = val(a);
                acc_into(adj, a, g, |k, gv| gv * sigmoid(x.data()[k]))
            }
            &Op::Square(a) => {
                let x = val(a);
                acc_into(adj, a, g, |k, gv| gv * (x.data()[k] + x.data()[k]))
            }
            Op::Gather { table, ids } => {
                let buf = slot(adj, *table, val(*table).shape());
                for (r, &i) in ids.iter().enumerate() {
                    for (o, &gv) in buf.row_mut(i).iter_mut().zip(g.row(r)) {
                        *o += gv;
                    }
                }
            }
            &Op::SliceCols { a, start } => {
                let buf = slot(adj, a, val(a).shape());
                let w = g.cols();
                for r in 0..g.rows() {
                    for (o, &gv) in buf.row_mut(r)[start..start + w].iter_mut().zip(g.row(r)) {
                        *o += gv;
                    }
                }
            }
            &Op::SliceRows { a, start } => {
                let buf = slot(adj, a, val(a).shape());
                let c = g.cols();
                for (o, &gv) in buf.data_mut()[start * c..].iter_mut().zip(g.data()) {
                    *o += gv;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = val(p).len();
                    if wants(p) {
                        let buf = slot(adj, p, val(p).shape());
                        for (o, &gv) in buf.data_mut().iter_mut().zip(&g.data()[off..off + n]) {
                            *o += gv;
                        }
                    }
                    off += n;
                }
            }
            Op::ConcatCols(parts) => {
                let total = g.cols();
                let mut off = 0;
                for &p in parts {
                    let w = col_width(val(p));
                    if wants(p) {
                        let buf = slot(adj, p, val(p).shape());
                        for r in 0..g.rows() {
                            let src = &g.data()[r * total + off..r * total + off + w];
                            for (o, &gv) in buf.data_mut()[r * w..(r + 1) * w].iter_mut().zip(src) {
                                *o += gv;
                            }
                        }
                    }
                    off += w;
                }
            }
            &Op::SoftmaxRows(a) => {
                let buf = slot(adj, a, val(a).shape());
                for r in 0..g.rows() {
                    let (y, gr) = (out.row(r), g.row(r));
                    let dotp: T = y.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                    for ((o, &yv), &gv) in buf.row_mut(r).iter_mut().zip(y).zip(gr) {
                        *o += yv * (gv - dotp);
                    }
                }
            }
            &Op::LogSoftmaxRows(a) => {
                let buf = slot(adj, a, val(a).shape());
                for r in 0..g.rows() {
                    let (y, gr) = (out.row(r), g.row(r));
                    let gs: T = gr.iter().copied().sum();
                    for ((o, &yv), &gv) in buf.row_mut(r).iter_mut().zip(y).zip(gr) {
                        *o += gv - yv.exp() * gs;
                    }
                }
            }
            Op::LogSoftmaxPick { a, targets, lse } => {
                let x = val(*a);
                let buf = slot(adj, *a, x.shape());
                for r in 0..x.rows() {
                    let gv = g.data()[r];
                    if gv == T::zero() {
                        continue;
                    }
                    let z = lse[r];
                    for (o, &xv) in buf.row_mut(r).iter_mut().zip(x.row(r)) {
                        *o -= gv * (xv - z).exp();
                    }
                    buf.row_mut(r)[targets[r]] += gv;
                }
            }
            &Op::LogSumExpRows(a) => {
                let x = val(a);
                let buf = slot(adj, a, x.shape());
                for r in 0..x.rows() {
                    let gv = g.data()[r];
                    let z = out.data()[r];
                    for (o, &xv) in buf.row_mut(r).iter_mut().zip(x.row(r)) {
                        *o += gv * (xv - z).exp();
                    }
                }
            }
            Op::ScatterAddGated { a, b, cols, gate } => {
                if wants(*a) {
                    acc_into(adj, *a, g, |_, gv| gv);
                }
                if wants(*b) {
                    let y = val(*b);
                    let broadcast = y.rows() == 1;
                    let buf = slot(adj, *b, y.shape());
                    for r in 0..g.rows() {
                        let gt = gate[r];
                        if gt == T::zero() {
                            continue;
                        }
                        let gr = g.row(r);
                        let dst = buf.row_mut(if broadcast { 0 } else { r });
                        for (o, &c) in dst.iter_mut().zip(cols.iter()) {
                            *o += gt * gr[c];
                        }
                    }
                }
            }
            &Op::Sum(a) => {
                let gv = g.item();
                acc_into(adj, a, val(a), |_, _| gv)
            }
            &Op::RowSum(a) => {
                let x = val(a);
                let w = x.cols();
                acc_into(adj, a, x, |k, _| g.data()[k / w])
            }
            &Op::Dot(a, b) => {
                let gv = g.item();
                if wants(a) {
                    let y = val(b);
                    acc_into(adj, a, y, |k, _| gv * y.data()[k]);
                }
                if wants(b) {
                    let x = val(a);
                    acc_into(adj, b, x, |k, _| gv * x.data()[k]);
                }
            }
        }
    }
}

fn col_rows<T: Real>(x: &NumArray<T>) -> usize {
    if x.shape().len() == 1 {
        x.len()
    } else {
        x.rows()
    }
}

fn col_width<T: Real>(x: &NumArray<T>) -> usize {
    if x.shape().len() == 1 {
        1
    } else {
        x.cols()
    }
}

fn slot<'s, T: Real>(
    adj: &'s mut [Option<NumArray<T>>],
    v: Var,
    shape: &[usize],
) -> &'s mut NumArray<T> {
    adj[v.0].get_or_insert_with(|| NumArray::zeros(shape))
}

/// `adj[v][k] += f(k, like[k])` over every element of `like` (same length as `v`).
fn acc_into<T: Real>(
    adj: &mut [Option<NumArray<T>>],
    v: Var,
    like: &NumArray<T>,
    f: impl Fn(usize, T) -> T,
) {
    let buf = adj[v.0].get_or_insert_with(|| NumArray::zeros(like.shape()));
    debug_assert_eq!(buf.len(), like.len());
    for (k, (o, &x)) in buf.data_mut().iter_mut().zip(like.data()).enumerate() {
        *o += f(k, x);
    }
}
