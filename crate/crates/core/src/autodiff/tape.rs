//! Reverse-mode recording of matrix operations.
//!
//! A [`Tape`] is built fresh for every forward pass. Nodes are appended in
//! evaluation order, so every operand of a node has a smaller index and the
//! reverse sweep in [`Tape::backward`] is a single pass over the node list.

use std::sync::Arc;

use super::tensor::{gemm, Layout};
use super::{ParamId, ParamStore, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Linear(Var, Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    SoftmaxRows(Var),
    BlockLeftMul(Arc<Tensor>, Var),
    GatherRows(Var, Arc<[usize]>),
    EdgeReluSum(EdgeReluSum),
    Sum(Var),
    Mse(Var, Var),
}

#[derive(Debug)]
struct EdgeReluSum {
    target: Var,
    source: Var,
    raw: Arc<Tensor>,
    proj: Var,
    offset: Var,
    nodes: usize,
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    param: Option<ParamId>,
    requires_grad: bool,
}

/// Per-node gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::Shape { op, left: a.shape().to_vec(), right: b.shape().to_vec() }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        debug_assert!(value.is_matrix());
        self.nodes.push(Node { value, op, param: None, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a value that takes no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        assert!(t.is_matrix(), "tape values are matrices");
        self.push(t, Op::Leaf, false)
    }

    /// Records a leaf whose gradient is tracked but which is not a parameter.
    pub fn input(&mut self, t: Tensor) -> Var {
        assert!(t.is_matrix(), "tape values are matrices");
        self.push(t, Op::Leaf, true)
    }

    /// Records the current value of a parameter as a leaf.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let p = store.get(id);
        let v = self.push(p.tensor.clone(), Op::Leaf, p.trainable);
        self.nodes[v.0].param = Some(id);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.rows() {
            return Err(shape_err("matmul", ta, tb));
        }
        let out = ta.matmul(tb)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// `x * w + b` with `b` broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, TensorError> {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        if tx.cols() != tw.rows() {
            return Err(shape_err("linear", tx, tw));
        }
        if tb.rows() != 1 || tb.cols() != tw.cols() {
            return Err(shape_err("linear_bias", tw, tb));
        }
        let (m, k, n) = (tx.rows(), tx.cols(), tw.cols());
        let mut out = Vec::with_capacity(m * n);
        for _ in 0..m {
            out.extend_from_slice(tb.data());
        }
        gemm(m, k, n, tx.data(), Layout::Normal, tw.data(), Layout::Normal, &mut out, true);
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::Linear(x, w, b), rg))
    }

    fn zip_same(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(op, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.zip_same("add", a, b, |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.zip_same("sub", a, b, |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.zip_same("mul", a, b, |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    /// Adds a `1 x C` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var, TensorError> {
        let (tx, tr) = (self.value(x), self.value(row));
        if tr.rows() != 1 || tr.cols() != tx.cols() {
            return Err(shape_err("add_row", tx, tr));
        }
        let c = tx.cols();
        let mut out = tx.clone();
        for chunk in out.data_mut().chunks_exact_mut(c) {
            for (o, r) in chunk.iter_mut().zip(tr.data()) {
                *o += r;
            }
        }
        let rg = self.rg(x) || self.rg(row);
        Ok(self.push(out, Op::AddRow(x, row), rg))
    }

    /// Multiplies every row of `x` elementwise by a `1 x C` row.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var, TensorError> {
        let (tx, tr) = (self.value(x), self.value(row));
        if tr.rows() != 1 || tr.cols() != tx.cols() {
            return Err(shape_err("mul_row", tx, tr));
        }
        let c = tx.cols();
        let mut out = tx.clone();
        for chunk in out.data_mut().chunks_exact_mut(c) {
            for (o, r) in chunk.iter_mut().zip(tr.data()) {
                *o *= r;
            }
        }
        let rg = self.rg(x) || self.rg(row);
        Ok(self.push(out, Op::MulRow(x, row), rg))
    }

    /// Scales row `r` of `x` by `s[r]` where `s` is `R x 1`.
    pub fn mul_col(&mut self, x: Var, s: Var) -> Result<Var, TensorError> {
        let (tx, ts) = (self.value(x), self.value(s));
        if ts.cols() != 1 || ts.rows() != tx.rows() {
            return Err(shape_err("mul_col", tx, ts));
        }
        let c = tx.cols();
        let mut out = tx.clone();
        for (chunk, &f) in out.data_mut().chunks_exact_mut(c).zip(ts.data()) {
            for o in chunk {
                *o *= f;
            }
        }
        let rg = self.rg(x) || self.rg(s);
        Ok(self.push(out, Op::MulCol(x, s), rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.value(x).map(|v| v * factor);
        let rg = self.rg(x);
        self.push(out, Op::Scale(x, factor), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        let rg = self.rg(x);
        self.push(out, Op::Relu(x), rg)
    }

    pub fn activation(&mut self, x: Var, act: Activation) -> Var {
        match act {
            Activation::Relu => self.relu(x),
            Activation::Identity => x,
        }
    }

    /// Concatenates along the feature (column) axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = *parts.first().ok_or(TensorError::Empty("concat_cols"))?;
        let rows = self.value(first).rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows {
                return Err(shape_err("concat_cols", self.value(first), t));
            }
            widths.push(t.cols());
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::matrix(rows, total, out)?, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Columns `start..end` of `x`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let tx = self.value(x);
        if start >= end || end > tx.cols() {
            return Err(TensorError::Range { op: "slice_cols", start, end, len: tx.cols() });
        }
        let w = end - start;
        let mut out = Vec::with_capacity(tx.rows() * w);
        for r in 0..tx.rows() {
            out.extend_from_slice(&tx.row(r)[start..end]);
        }
        let out = Tensor::matrix(tx.rows(), w, out)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::SliceCols(x, start), rg))
    }

    /// Rows `start..end` of `x`.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let tx = self.value(x);
        if start >= end || end > tx.rows() {
            return Err(TensorError::Range { op: "slice_rows", start, end, len: tx.rows() });
        }
        let c = tx.cols();
        let out = Tensor::matrix(end - start, c, tx.data()[start * c..end * c].to_vec())?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::SliceRows(x, start), rg))
    }

    /// Row-wise softmax.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        let c = out.cols();
        for row in out.data_mut().chunks_exact_mut(c) {
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
        let rg = self.rg(x);
        self.push(out, Op::SoftmaxRows(x), rg)
    }

    /// Left-multiplies each consecutive `N`-row block of `x` by the constant
    /// `N x N` matrix `m`.
    pub fn block_left_mul(&mut self, m: Arc<Tensor>, x: Var) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let n = m.rows();
        if m.cols() != n || !tx.rows().is_multiple_of(n) {
            return Err(shape_err("block_left_mul", &m, tx));
        }
        let c = tx.cols();
        let mut out = vec![0.0; tx.numel()];
        for (xb, ob) in tx.data().chunks_exact(n * c).zip(out.chunks_exact_mut(n * c)) {
            gemm(n, n, c, m.data(), Layout::Normal, xb, Layout::Normal, ob, false);
        }
        let out = Tensor::matrix(tx.rows(), c, out)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::BlockLeftMul(m, x), rg))
    }

    /// Selects rows of `x` by index (repeats allowed).
    pub fn gather_rows(&mut self, x: Var, index: Arc<[usize]>) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let c = tx.cols();
        let mut out = Vec::with_capacity(index.len() * c);
        for &i in index.iter() {
            if i >= tx.rows() {
                return Err(TensorError::Range { op: "gather_rows", start: i, end: i + 1, len: tx.rows() });
            }
            out.extend_from_slice(tx.row(i));
        }
        let out = Tensor::matrix(index.len(), c, out)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::GatherRows(x, index), rg))
    }

    /// Fused message pre-activation and sum aggregation over complete graphs.
    ///
    /// `target` and `source` are `(B*N) x H`, `raw` is `(B*E) x R` with
    /// `E = N(N-1)` edges per block ordered target-major (see
    /// [`edge_index`]), `proj` is `R x H` and `offset` is `1 x H`. Row `i` of
    /// block `b` of the result is
    /// `sum_{j != i} relu(target_i + source_j + raw_{(i,j)} proj + offset)`.
    pub fn edge_relu_sum(
        &mut self,
        target: Var,
        source: Var,
        raw: Arc<Tensor>,
        proj: Var,
        offset: Var,
        nodes: usize,
    ) -> Result<Var, TensorError> {
        let (tt, ts, tp, to) = (self.value(target), self.value(source), self.value(proj), self.value(offset));
        let h = tt.cols();
        if ts.shape() != tt.shape() {
            return Err(shape_err("edge_relu_sum", tt, ts));
        }
        if nodes < 2 || tt.rows() % nodes != 0 {
            return Err(TensorError::Range { op: "edge_relu_sum", start: nodes, end: nodes, len: tt.rows() });
        }
        let blocks = tt.rows() / nodes;
        let edges = nodes * (nodes - 1);
        if raw.rows() != blocks * edges || raw.cols() != tp.rows() {
            return Err(shape_err("edge_relu_sum_raw", &raw, tp));
        }
        if tp.cols() != h || to.cols() != h || to.rows() != 1 {
            return Err(shape_err("edge_relu_sum_proj", tp, to));
        }
        let r = raw.cols();
        let mut out = vec![0.0; tt.numel()];
        let mut z = vec![0.0; h];
        let mut base = vec![0.0; h];
        for b in 0..blocks {
            for i in 0..nodes {
                let gi = b * nodes + i;
                for (bk, (t, o)) in base.iter_mut().zip(tt.row(gi).iter().zip(to.data())) {
                    *bk = t + o;
                }
                let acc = &mut out[gi * h..(gi + 1) * h];
                for j in (0..nodes).filter(|&j| j != i) {
                    let e = b * edges + edge_index(nodes, i, j);
                    z.copy_from_slice(&base);
                    for (zk, s) in z.iter_mut().zip(ts.row(b * nodes + j)) {
                        *zk += s;
                    }
                    for (q, &f) in raw.row(e).iter().enumerate().take(r) {
                        for (zk, p) in z.iter_mut().zip(tp.row(q)) {
                            *zk += f * p;
                        }
                    }
                    for (a, &zk) in acc.iter_mut().zip(&z) {
                        if zk > 0.0 {
                            *a += zk;
                        }
                    }
                }
            }
        }
        let out = Tensor::matrix(tt.rows(), h, out)?;
        let rg = self.rg(target) || self.rg(source) || self.rg(proj) || self.rg(offset);
        Ok(self.push(out, Op::EdgeReluSum(EdgeReluSum { target, source, raw, proj, offset, nodes }), rg))
    }

    /// Sum of all entries as a `1 x 1` value.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Mean squared difference between `pred` and `target`.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var, TensorError> {
        let (tp, tt) = (self.value(pred), self.value(target));
        if tp.shape() != tt.shape() {
            return Err(shape_err("mse", tp, tt));
        }
        let n = tp.numel() as f64;
        let s = tp.data().iter().zip(tt.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
        let rg = self.rg(pred) || self.rg(target);
        Ok(self.push(Tensor::scalar(s), Op::Mse(pred, target), rg))
    }

    /// Reverse sweep from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let lt = self.value(loss);
        if lt.numel() != 1 {
            return Err(TensorError::NotScalar { shape: lt.shape().to_vec() });
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lt.shape(), 1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                grads[idx] = None;
                continue;
            }
            let (lower, upper) = grads.split_at_mut(idx);
            let Some(g) = upper[0].as_ref() else { continue };
            self.propagate(node, g, lower);
        }
        Ok(Gradients { grads })
    }

    /// Runs [`Tape::backward`] and adds every parameter gradient into `store`.
    pub fn backward_into(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients, TensorError> {
        let grads = self.backward(loss)?;
        let params = store.params_mut();
        for (node, g) in self.nodes.iter().zip(&grads.grads) {
            if let (Some(id), Some(g)) = (node.param, g) {
                params[id.0].grad.add_assign(g);
            }
        }
        Ok(grads)
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.wants(*a) {
                    let slot = slot(grads, *a, ta);
                    gemm(m, n, k, g.data(), Layout::Normal, tb.data(), Layout::Transposed, slot.data_mut(), true);
                }
                if self.wants(*b) {
                    let slot = slot(grads, *b, tb);
                    gemm(k, m, n, ta.data(), Layout::Transposed, g.data(), Layout::Normal, slot.data_mut(), true);
                }
            }
            Op::Linear(x, w, b) => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let (m, k, n) = (tx.rows(), tx.cols(), tw.cols());
                if self.wants(*x) {
                    let slot = slot(grads, *x, tx);
                    gemm(m, n, k, g.data(), Layout::Normal, tw.data(), Layout::Transposed, slot.data_mut(), true);
                }
                if self.wants(*w) {
                    let slot = slot(grads, *w, tw);
                    gemm(k, m, n, tx.data(), Layout::Transposed, g.data(), Layout::Normal, slot.data_mut(), true);
                }
                if self.wants(*b) {
                    let slot = slot(grads, *b, self.value(*b));
                    col_sum_into(g, slot.data_mut());
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if self.wants(v) {
                        slot(grads, v, g).add_assign(g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    slot(grads, *a, g).add_assign(g);
                }
                if self.wants(*b) {
                    for (s, gv) in slot(grads, *b, g).data_mut().iter_mut().zip(g.data()) {
                        *s -= gv;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    for ((s, gv), bv) in slot(grads, *a, ta).data_mut().iter_mut().zip(g.data()).zip(tb.data()) {
                        *s += gv * bv;
                    }
                }
                if self.wants(*b) {
                    for ((s, gv), av) in slot(grads, *b, tb).data_mut().iter_mut().zip(g.data()).zip(ta.data()) {
                        *s += gv * av;
                    }
                }
            }
            Op::AddRow(x, row) => {
                if self.wants(*x) {
                    slot(grads, *x, g).add_assign(g);
                }
                if self.wants(*row) {
                    let slot = slot(grads, *row, self.value(*row));
                    col_sum_into(g, slot.data_mut());
                }
            }
            Op::MulRow(x, row) => {
                let (tx, tr) = (self.value(*x), self.value(*row));
                let c = tx.cols();
                if self.wants(*x) {
                    let s = slot(grads, *x, tx);
                    for (sc, gc) in s.data_mut().chunks_exact_mut(c).zip(g.data().chunks_exact(c)) {
                        for ((sv, gv), rv) in sc.iter_mut().zip(gc).zip(tr.data()) {
                            *sv += gv * rv;
                        }
                    }
                }
                if self.wants(*row) {
                    let s = slot(grads, *row, tr);
                    for (xc, gc) in tx.data().chunks_exact(c).zip(g.data().chunks_exact(c)) {
                        for ((sv, gv), xv) in s.data_mut().iter_mut().zip(gc).zip(xc) {
                            *sv += gv * xv;
                        }
                    }
                }
            }
            Op::MulCol(x, col) => {
                let (tx, tc) = (self.value(*x), self.value(*col));
                let c = tx.cols();
                if self.wants(*x) {
                    let s = slot(grads, *x, tx);
                    for ((sc, gc), &f) in s.data_mut().chunks_exact_mut(c).zip(g.data().chunks_exact(c)).zip(tc.data())
                    {
                        for (sv, gv) in sc.iter_mut().zip(gc) {
                            *sv += gv * f;
                        }
                    }
                }
                if self.wants(*col) {
                    let s = slot(grads, *col, tc);
                    for ((sv, gc), xc) in
                        s.data_mut().iter_mut().zip(g.data().chunks_exact(c)).zip(tx.data().chunks_exact(c))
                    {
                        *sv += gc.iter().zip(xc).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
            Op::Scale(x, f) => {
                if self.wants(*x) {
                    for (s, gv) in slot(grads, *x, g).data_mut().iter_mut().zip(g.data()) {
                        *s += f * gv;
                    }
                }
            }
            Op::Relu(x) => {
                if self.wants(*x) {
                    for ((s, gv), yv) in slot(grads, *x, g).data_mut().iter_mut().zip(g.data()).zip(node.value.data()) {
                        if *yv > 0.0 {
                            *s += gv;
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let tp = self.value(p);
                    let w = tp.cols();
                    if self.wants(p) {
                        let s = slot(grads, p, tp);
                        for (sc, gc) in s.data_mut().chunks_exact_mut(w).zip(g.data().chunks_exact(total)) {
                            for (sv, gv) in sc.iter_mut().zip(&gc[offset..offset + w]) {
                                *sv += gv;
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::SliceCols(x, start) => {
                if self.wants(*x) {
                    let tx = self.value(*x);
                    let (c, w) = (tx.cols(), g.cols());
                    let s = slot(grads, *x, tx);
                    for (sc, gc) in s.data_mut().chunks_exact_mut(c).zip(g.data().chunks_exact(w)) {
                        for (sv, gv) in sc[*start..*start + w].iter_mut().zip(gc) {
                            *sv += gv;
                        }
                    }
                }
            }
            Op::SliceRows(x, start) => {
                if self.wants(*x) {
                    let tx = self.value(*x);
                    let c = tx.cols();
                    let s = slot(grads, *x, tx);
                    for (sv, gv) in s.data_mut()[start * c..].iter_mut().zip(g.data()) {
                        *sv += gv;
                    }
                }
            }
            Op::SoftmaxRows(x) => {
                if self.wants(*x) {
                    let y = &node.value;
                    let c = y.cols();
                    let s = slot(grads, *x, y);
                    for ((sc, gc), yc) in
                        s.data_mut().chunks_exact_mut(c).zip(g.data().chunks_exact(c)).zip(y.data().chunks_exact(c))
                    {
                        let dot: f64 = gc.iter().zip(yc).map(|(a, b)| a * b).sum();
                        for ((sv, gv), yv) in sc.iter_mut().zip(gc).zip(yc) {
                            *sv += yv * (gv - dot);
                        }
                    }
                }
            }
            Op::BlockLeftMul(m, x) => {
                if self.wants(*x) {
                    let tx = self.value(*x);
                    let (n, c) = (m.rows(), tx.cols());
                    let s = slot(grads, *x, tx);
                    for (sb, gb) in s.data_mut().chunks_exact_mut(n * c).zip(g.data().chunks_exact(n * c)) {
                        gemm(n, n, c, m.data(), Layout::Transposed, gb, Layout::Normal, sb, true);
                    }
                }
            }
            Op::GatherRows(x, index) => {
                if self.wants(*x) {
                    let tx = self.value(*x);
                    let c = tx.cols();
                    let s = slot(grads, *x, tx);
                    for (r, &i) in index.iter().enumerate() {
                        for (sv, gv) in s.data_mut()[i * c..(i + 1) * c].iter_mut().zip(g.row(r)) {
                            *sv += gv;
                        }
                    }
                }
            }
            Op::EdgeReluSum(op) => self.edge_relu_sum_backward(op, g, grads),
            Op::Sum(x) => {
                if self.wants(*x) {
                    let gv = g.data()[0];
                    for s in slot(grads, *x, self.value(*x)).data_mut() {
                        *s += gv;
                    }
                }
            }
            Op::Mse(p, t) => {
                let (tp, tt) = (self.value(*p), self.value(*t));
                let f = 2.0 * g.data()[0] / tp.numel() as f64;
                if self.wants(*p) {
                    for ((s, a), b) in slot(grads, *p, tp).data_mut().iter_mut().zip(tp.data()).zip(tt.data()) {
                        *s += f * (a - b);
                    }
                }
                if self.wants(*t) {
                    for ((s, a), b) in slot(grads, *t, tt).data_mut().iter_mut().zip(tp.data()).zip(tt.data()) {
                        *s -= f * (a - b);
                    }
                }
            }
        }
    }

    fn edge_relu_sum_backward(&self, op: &EdgeReluSum, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let (tt, ts, tp, to) =
            (self.value(op.target), self.value(op.source), self.value(op.proj), self.value(op.offset));
        let nodes = op.nodes;
        let h = tt.cols();
        let r = op.raw.cols();
        let blocks = tt.rows() / nodes;
        let edges = nodes * (nodes - 1);
        let mut g_target = vec![0.0; tt.numel()];
        let mut g_source = vec![0.0; ts.numel()];
        let mut g_proj = vec![0.0; tp.numel()];
        let mut g_offset = vec![0.0; h];
        let mut z = vec![0.0; h];
        let mut masked = vec![0.0; h];
        let mut base = vec![0.0; h];
        for b in 0..blocks {
            for i in 0..nodes {
                let gi = b * nodes + i;
                let gr = g.row(gi);
                for (bk, (t, o)) in base.iter_mut().zip(tt.row(gi).iter().zip(to.data())) {
                    *bk = t + o;
                }
                for j in (0..nodes).filter(|&j| j != i) {
                    let gj = b * nodes + j;
                    let e = b * edges + edge_index(nodes, i, j);
                    z.copy_from_slice(&base);
                    for (zk, s) in z.iter_mut().zip(ts.row(gj)) {
                        *zk += s;
                    }
                    let raw_row = op.raw.row(e);
                    for (q, &f) in raw_row.iter().enumerate().take(r) {
                        for (zk, p) in z.iter_mut().zip(tp.row(q)) {
                            *zk += f * p;
                        }
                    }
                    for ((m, &zk), &gk) in masked.iter_mut().zip(&z).zip(gr) {
                        *m = if zk > 0.0 { gk } else { 0.0 };
                    }
                    for (a, m) in g_target[gi * h..(gi + 1) * h].iter_mut().zip(&masked) {
                        *a += m;
                    }
                    for (a, m) in g_source[gj * h..(gj + 1) * h].iter_mut().zip(&masked) {
                        *a += m;
                    }
                    for (a, m) in g_offset.iter_mut().zip(&masked) {
                        *a += m;
                    }
                    for (q, &f) in raw_row.iter().enumerate() {
                        if f != 0.0 {
                            for (a, m) in g_proj[q * h..(q + 1) * h].iter_mut().zip(&masked) {
                                *a += f * m;
                            }
                        }
                    }
                }
            }
        }
        let pairs = [(op.target, g_target), (op.source, g_source), (op.proj, g_proj), (op.offset, g_offset)];
        for (v, gv) in pairs {
            if self.wants(v) {
                for (s, x) in slot(grads, v, self.value(v)).data_mut().iter_mut().zip(&gv) {
                    *s += x;
                }
            }
        }
    }
}

/// Position of edge `source -> target` within one complete-graph block,
/// ordered by target then source.
pub fn edge_index(nodes: usize, target: usize, source: usize) -> usize {
    debug_assert!(target != source && target < nodes && source < nodes);
    target * (nodes - 1) + if source > target { source - 1 } else { source }
}

fn slot<'a>(grads: &'a mut [Option<Tensor>], v: Var, like: &Tensor) -> &'a mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(like.shape()))
}

fn col_sum_into(g: &Tensor, out: &mut [f64]) {
    let c = g.cols();
    for chunk in g.data().chunks_exact(c) {
        for (o, v) in out.iter_mut().zip(chunk) {
            *o += v;
        }
    }
}
