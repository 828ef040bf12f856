//! Reverse-mode differentiation over a linear tape.
//!
//! Nodes are appended in evaluation order, so walking the tape backwards from
//! the output visits every node after all of its consumers.

use std::borrow::Cow;

use super::tensor::{gemm, Tensor};
use super::NumericsError;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

enum Op {
    Leaf,
    MatMul { a: Var, b: Var, b_trans: bool },
    Add(Var, Var),
    AddRow(Var, Var),
    AddConst(Var),
    Scale(Var, f64),
    Mul(Var, Var),
    MulConst(Var, Vec<f64>),
    Relu(Var),
    Gelu(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Embedding { table: Var, ids: Vec<usize> },
    SliceRows { x: Var, start: usize },
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    Sum(Var),
    Element { x: Var, index: usize },
    CrossEntropy { logits: Var, target: usize, probs: Vec<f64> },
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    tracked: bool,
}

/// A computation record confined to one thread.
#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

fn mismatch(op: &'static str, shapes: &[&[usize]]) -> NumericsError {
    NumericsError::ShapeMismatch {
        op,
        shapes: shapes.iter().map(|s| s.to_vec()).collect(),
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Tape<'a> {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            tracked,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records an owned input.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Records a borrowed input (model parameters) without copying it.
    pub fn param(&mut self, value: &'a Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(value),
            op: Op::Leaf,
            tracked: requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    fn tracked(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].tracked)
    }

    /// `a · b` for `a: [m, k]`, `b: [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ` for `a: [m, k]`, `b: [n, k]`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, b_trans: bool) -> Result<Var, NumericsError> {
        let (av, bv) = (self.value(a), self.value(b));
        let op_name = if b_trans { "matmul_t" } else { "matmul" };
        if av.shape().len() != 2 || bv.shape().len() != 2 {
            return Err(mismatch(op_name, &[av.shape(), bv.shape()]));
        }
        let (m, k) = (av.shape()[0], av.shape()[1]);
        let (kb, n) = if b_trans {
            (bv.shape()[1], bv.shape()[0])
        } else {
            (bv.shape()[0], bv.shape()[1])
        };
        if k != kb {
            return Err(mismatch(op_name, &[av.shape(), bv.shape()]));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, av.data(), false, bv.data(), b_trans, &mut out, 0.0);
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(
            Tensor::new(vec![m, n], out)?,
            Op::MatMul { a, b, b_trans },
            tracked,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(mismatch("add", &[av.shape(), bv.shape()]));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), tracked))
    }

    /// Adds a row vector `b: [n]` to every row of `x: [.., n]`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var, NumericsError> {
        let (xv, bv) = (self.value(x), self.value(b));
        let n = xv.cols();
        if bv.len() != n {
            return Err(mismatch("add_row", &[xv.shape(), bv.shape()]));
        }
        let mut data = xv.data().to_vec();
        for row in data.chunks_mut(n) {
            for (r, bb) in row.iter_mut().zip(bv.data()) {
                *r += bb;
            }
        }
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        let tracked = self.tracked(&[x, b]);
        Ok(self.push(value, Op::AddRow(x, b), tracked))
    }

    /// Adds an untracked constant, e.g. an additive attention mask.
    pub fn add_const(&mut self, x: Var, c: &Tensor) -> Result<Var, NumericsError> {
        let xv = self.value(x);
        if xv.shape() != c.shape() {
            return Err(mismatch("add_const", &[xv.shape(), c.shape()]));
        }
        let data = xv.data().iter().zip(c.data()).map(|(a, b)| a + b).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        let tracked = self.tracked(&[x]);
        Ok(self.push(value, Op::AddConst(x), tracked))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|v| v * s).collect();
        let value = Tensor::new(xv.shape().to_vec(), data).unwrap();
        let tracked = self.tracked(&[x]);
        self.push(value, Op::Scale(x, s), tracked)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(mismatch("mul", &[av.shape(), bv.shape()]));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), tracked))
    }

    /// Elementwise product with an untracked constant (dropout masks).
    pub fn mul_const(&mut self, x: Var, c: Vec<f64>) -> Result<Var, NumericsError> {
        let xv = self.value(x);
        if xv.len() != c.len() {
            return Err(mismatch("mul_const", &[xv.shape(), &[c.len()]]));
        }
        let data = xv.data().iter().zip(&c).map(|(a, b)| a * b).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        let tracked = self.tracked(&[x]);
        Ok(self.push(value, Op::MulConst(x, c), tracked))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|v| v.max(0.0)).collect();
        let value = Tensor::new(xv.shape().to_vec(), data).unwrap();
        let tracked = self.tracked(&[x]);
        self.push(value, Op::Relu(x), tracked)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv
            .data()
            .iter()
            .map(|&v| 0.5 * v * (1.0 + (GELU_C * (v + GELU_A * v * v * v)).tanh()))
            .collect();
        let value = Tensor::new(xv.shape().to_vec(), data).unwrap();
        let tracked = self.tracked(&[x]);
        self.push(value, Op::Gelu(x), tracked)
    }

    /// Softmax along the last axis, max-subtracted.
    pub fn softmax(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let n = xv.cols();
        let mut data = xv.data().to_vec();
        for row in data.chunks_mut(n) {
            softmax_in_place(row);
        }
        let value = Tensor::new(xv.shape().to_vec(), data).unwrap();
        let tracked = self.tracked(&[x]);
        self.push(value, Op::Softmax(x), tracked)
    }

    /// Row-wise layer normalization with learned gain and bias of length `cols`.
    pub fn layer_norm(
        &mut self,
        x: Var,
        gain: Var,
        bias: Var,
        eps: f64,
    ) -> Result<Var, NumericsError> {
        let (xv, gv, bv) = (self.value(x), self.value(gain), self.value(bias));
        let n = xv.cols();
        if gv.len() != n || bv.len() != n {
            return Err(mismatch("layer_norm", &[xv.shape(), gv.shape(), bv.shape()]));
        }
        let rows = xv.rows();
        let mut xhat = vec![0.0; xv.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; xv.len()];
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..n {
                let h = (row[j] - mean) * is;
                xhat[r * n + j] = h;
                out[r * n + j] = h * gv.data()[j] + bv.data()[j];
            }
        }
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        let tracked = self.tracked(&[x, gain, bias]);
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            tracked,
        ))
    }

    /// Gathers rows `ids` of `table: [vocab, dim]` into `[ids.len(), dim]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var, NumericsError> {
        let tv = self.value(table);
        if tv.shape().len() != 2 {
            return Err(mismatch("embedding", &[tv.shape()]));
        }
        let (vocab, dim) = (tv.shape()[0], tv.shape()[1]);
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            if id >= vocab {
                return Err(mismatch("embedding", &[tv.shape(), &[id]]));
            }
            out.extend_from_slice(tv.row(id));
        }
        let value = Tensor::new(vec![ids.len(), dim], out)?;
        let tracked = self.tracked(&[table]);
        Ok(self.push(
            value,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            tracked,
        ))
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var, NumericsError> {
        let xv = self.value(x);
        if xv.shape().len() != 2 || start >= end || end > xv.shape()[0] {
            return Err(mismatch("slice_rows", &[xv.shape(), &[start, end]]));
        }
        let n = xv.cols();
        let data = xv.data()[start * n..end * n].to_vec();
        let value = Tensor::new(vec![end - start, n], data)?;
        let tracked = self.tracked(&[x]);
        Ok(self.push(value, Op::SliceRows { x, start }, tracked))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var, NumericsError> {
        let xv = self.value(x);
        if xv.shape().len() != 2 || start >= end || end > xv.shape()[1] {
            return Err(mismatch("slice_cols", &[xv.shape(), &[start, end]]));
        }
        let (rows, n) = (xv.shape()[0], xv.shape()[1]);
        let mut data = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            data.extend_from_slice(&xv.data()[r * n + start..r * n + end]);
        }
        let value = Tensor::new(vec![rows, end - start], data)?;
        let tracked = self.tracked(&[x]);
        Ok(self.push(value, Op::SliceCols { x, start }, tracked))
    }

    /// Concatenates matrices with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let first = parts.first().ok_or_else(|| mismatch("concat_cols", &[]))?;
        let rows = self.value(*first).rows();
        let mut total = 0;
        for p in parts {
            let pv = self.value(*p);
            if pv.shape().len() != 2 || pv.rows() != rows {
                let shapes: Vec<&[usize]> = parts.iter().map(|p| self.value(*p).shape()).collect();
                return Err(mismatch("concat_cols", &shapes));
            }
            total += pv.cols();
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(r));
            }
        }
        let value = Tensor::new(vec![rows, total], data)?;
        let tracked = self.tracked(parts);
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), tracked))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let tracked = self.tracked(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), tracked)
    }

    /// Selects one element (flat index) as a scalar.
    pub fn element(&mut self, x: Var, index: usize) -> Result<Var, NumericsError> {
        let xv = self.value(x);
        if index >= xv.len() {
            return Err(mismatch("element", &[xv.shape(), &[index]]));
        }
        let v = xv.data()[index];
        let tracked = self.tracked(&[x]);
        Ok(self.push(Tensor::scalar(v), Op::Element { x, index }, tracked))
    }

    /// `-log softmax(logits)[target]` for a single row of logits.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var, NumericsError> {
        let lv = self.value(logits);
        if lv.rows() != 1 || target >= lv.len() {
            return Err(mismatch("cross_entropy", &[lv.shape(), &[target]]));
        }
        let mut probs = lv.data().to_vec();
        let max = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + probs.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let loss = lse - probs[target];
        softmax_in_place(&mut probs);
        let tracked = self.tracked(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                target,
                probs,
            },
            tracked,
        ))
    }

    /// Back-propagates from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients, NumericsError> {
        let out = self.value(output);
        if out.len() != 1 {
            return Err(NumericsError::NonScalarOutput(out.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        if !self.nodes[output.0].tracked {
            return Ok(Gradients { grads });
        }
        grads[output.0] = Some(vec![1.0]);

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul { a, b, b_trans } => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k) = (av.shape()[0], av.shape()[1]);
                    let n = node.value.shape()[1];
                    if let Some(da) = self.slot(&mut grads, *a) {
                        gemm(m, n, k, &g, false, bv.data(), !*b_trans, da, 1.0);
                    }
                    if let Some(db) = self.slot(&mut grads, *b) {
                        if *b_trans {
                            gemm(n, m, k, &g, true, av.data(), false, db, 1.0);
                        } else {
                            gemm(k, m, n, av.data(), true, &g, false, db, 1.0);
                        }
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        if let Some(d) = self.slot(&mut grads, v) {
                            axpy(d, &g, 1.0);
                        }
                    }
                }
                Op::AddRow(x, b) => {
                    if let Some(dx) = self.slot(&mut grads, *x) {
                        axpy(dx, &g, 1.0);
                    }
                    if let Some(db) = self.slot(&mut grads, *b) {
                        let n = db.len();
                        for row in g.chunks(n) {
                            axpy(db, row, 1.0);
                        }
                    }
                }
                Op::AddConst(x) => {
                    if let Some(dx) = self.slot(&mut grads, *x) {
                        axpy(dx, &g, 1.0);
                    }
                }
                Op::Scale(x, s) => {
                    if let Some(dx) = self.slot(&mut grads, *x) {
                        axpy(dx, &g, *s);
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    if let Some(da) = self.slot(&mut grads, *a) {
                        for ((d, gg), y) in da.iter_mut().zip(&g).zip(bv) {
                            *d += gg * y;
                        }
                    }
                    if let Some(db) = self.slot(&mut grads, *b) {
                        for ((d, gg), y) in db.iter_mut().zip(&g).zip(av) {
                            *d += gg * y;
                        }
                    }
                }
                Op::MulConst(x, c) => {
                    if let Some(dx) = self.slot(&mut grads, *x) {
                        for ((d, gg), cc) in dx.iter_mut().zip(&g).zip(c) {
                            *d += gg * cc;
                        }
                    }
                }
                Op::Relu(x) => {
                    let xv = self.value(*x).data();
                    if let Some(dx) = self.slot(&mut grads, *x) {
                        for ((d, gg), v) in dx.iter_mut().zip(&g).zip(xv) {
                            if *v > 0.0 {
                                *d += gg;
                            }
                        }
                    }
                }
                Op::Gelu(x) => {
                    let xv = self.value(*x).data();
                    if let Some(dx) = self.slot(&mut grads, *x) {
                        for ((d, gg), &v) in dx.iter_mut().zip(&g).zip(xv) {
                            let t = (GELU_C * (v + GELU_A * v * v * v)).tanh();
                            let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * v * v);
                            *d += gg * (0.5 * (1.0 + t) + 0.5 * v * dt);
                        }
                    }
                }
                Op::Softmax(x) => {
                    let y = node.value.data();
                    let n = node.value.cols();
                    if let Some(dx) = self.slot(&mut grads, *x) {
                        for ((drow, grow), yrow) in
                            dx.chunks_mut(n).zip(g.chunks(n)).zip(y.chunks(n))
                        {
                            let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                            for ((d, gg), yy) in drow.iter_mut().zip(grow).zip(yrow) {
                                *d += yy * (gg - dot);
                            }
                        }
                    }
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let n = node.value.cols();
                    let gv = self.value(*gain).data();
                    if let Some(dg) = self.slot(&mut grads, *gain) {
                        for (grow, hrow) in g.chunks(n).zip(xhat.chunks(n)) {
                            for ((d, gg), h) in dg.iter_mut().zip(grow).zip(hrow) {
                                *d += gg * h;
                            }
                        }
                    }
                    if let Some(db) = self.slot(&mut grads, *bias) {
                        for grow in g.chunks(n) {
                            axpy(db, grow, 1.0);
                        }
                    }
                    if let Some(dx) = self.slot(&mut grads, *x) {
                        let mut gy = vec![0.0; n];
                        for (r, ((drow, grow), hrow)) in dx
                            .chunks_mut(n)
                            .zip(g.chunks(n))
                            .zip(xhat.chunks(n))
                            .enumerate()
                        {
                            for j in 0..n {
                                gy[j] = grow[j] * gv[j];
                            }
                            let mean_g = gy.iter().sum::<f64>() / n as f64;
                            let mean_gh =
                                gy.iter().zip(hrow).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                            for j in 0..n {
                                drow[j] += inv_std[r] * (gy[j] - mean_g - hrow[j] * mean_gh);
                            }
                        }
                    }
                }
                Op::Embedding { table, ids } => {
                    let dim = self.value(*table).cols();
                    if let Some(dt) = self.slot(&mut grads, *table) {
                        for (row, &id) in g.chunks(dim).zip(ids) {
                            axpy(&mut dt[id * dim..(id + 1) * dim], row, 1.0);
                        }
                    }
                }
                Op::SliceRows { x, start } => {
                    let n = node.value.cols();
                    if let Some(dx) = self.slot(&mut grads, *x) {
                        axpy(&mut dx[start * n..start * n + g.len()], &g, 1.0);
                    }
                }
                Op::SliceCols { x, start } => {
                    let w = node.value.cols();
                    let n = self.value(*x).cols();
                    if let Some(dx) = self.slot(&mut grads, *x) {
                        for (r, grow) in g.chunks(w).enumerate() {
                            axpy(&mut dx[r * n + start..r * n + start + w], grow, 1.0);
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let total = node.value.cols();
                    let mut offset = 0;
                    for p in parts {
                        let w = self.value(*p).cols();
                        if let Some(dp) = self.slot(&mut grads, *p) {
                            for (r, drow) in dp.chunks_mut(w).enumerate() {
                                axpy(drow, &g[r * total + offset..r * total + offset + w], 1.0);
                            }
                        }
                        offset += w;
                    }
                }
                Op::Sum(x) => {
                    if let Some(dx) = self.slot(&mut grads, *x) {
                        dx.iter_mut().for_each(|d| *d += g[0]);
                    }
                }
                Op::Element { x, index } => {
                    if let Some(dx) = self.slot(&mut grads, *x) {
                        dx[*index] += g[0];
                    }
                }
                Op::CrossEntropy {
                    logits,
                    target,
                    probs,
                } => {
                    if let Some(dl) = self.slot(&mut grads, *logits) {
                        for (j, (d, p)) in dl.iter_mut().zip(probs).enumerate() {
                            let onehot = if j == *target { 1.0 } else { 0.0 };
                            *d += g[0] * (p - onehot);
                        }
                    }
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
        let node = &self.nodes[v.0];
        if !node.tracked {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; node.value.len()]))
    }
}

fn axpy(y: &mut [f64], x: &[f64], a: f64) {
    for (yy, xx) in y.iter_mut().zip(x) {
        *yy += a * xx;
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
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

/// Gradient buffers produced by [`Tape::backward`].
///
/// Only tracked nodes reachable from the output carry a buffer.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}
