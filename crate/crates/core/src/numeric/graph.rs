//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied to its variables. Calling
//! [`Graph::backward`] on a scalar walks the tape in reverse and returns the
//! gradient of that scalar with respect to every parameter it touched.

use super::params::{ParamId, ParamStore};
use super::tensor::{gemm, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulConst(Var, Tensor),
    Affine(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize, usize),
    SliceRows(Var, usize, usize),
    GatherRows(ParamId, Vec<usize>),
    Transpose(Var),
    SoftmaxRows(Var),
    LogSumExpRows(Var),
    Sum(Var),
    /// Scalar computed outside the tape, with its gradient with respect to
    /// each input already known.
    Fused(Vec<(Var, Tensor)>),
}

#[derive(Debug)]
struct Node {
    value: Option<Tensor>,
    op: Op,
}

pub struct Graph<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
}

/// Gradients produced by one backward pass, indexed like the [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Adds these gradients into the stores' gradient buffers.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for (i, g) in self.grads.iter().enumerate() {
            if let Some(g) = g {
                store.get_mut(ParamId(i)).grad.add_assign(g);
            }
        }
    }
}

fn add_into(slot: &mut Option<Tensor>, t: Tensor) {
    match slot {
        Some(existing) => existing.add_assign(&t),
        None => *slot = Some(t),
    }
}

fn zeros_slot<'s>(slot: &'s mut Option<Tensor>, shape: &[usize]) -> &'s mut Tensor {
    slot.get_or_insert_with(|| Tensor::zeros(shape))
}

impl<'a> Graph<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0] {
            Node {
                op: Op::Param(id), ..
            } => self.store.value(*id),
            Node { value: Some(t), .. } => t,
            Node { value: None, .. } => unreachable!("node without value"),
        }
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; av.rows() * bv.cols()];
        let (m, n) = gemm(av, false, bv, false, &mut out, 0.0);
        self.push(Tensor::matrix(m, n, out), Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    /// Adds a `1 x n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let av = self.value(a);
        let rv = self.value(row);
        assert_eq!(rv.len(), av.cols(), "add_row width mismatch");
        let cols = av.cols();
        let mut out = av.clone();
        for (i, x) in out.data_mut().iter_mut().enumerate() {
            *x += rv.data()[i % cols];
        }
        self.push(out, Op::AddRow(a, row))
    }

    /// Elementwise product with a constant tensor (masks, dropout).
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Var {
        let v = self.value(a).zip_map(&c, |x, y| x * y);
        self.push(v, Op::MulConst(a, c))
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let v = self.value(a).map(|x| scale * x + shift);
        self.push(v, Op::Affine(a, scale))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::ln);
        self.push(v, Op::Log(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; rows * total];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let pv = self.value(p);
            assert_eq!(pv.rows(), rows, "concat_cols row mismatch");
            for r in 0..rows {
                out[r * total + offset..r * total + offset + w].copy_from_slice(pv.row_slice(r));
            }
            offset += w;
        }
        self.push(
            Tensor::matrix(rows, total, out),
            Op::ConcatCols(parts.to_vec()),
        )
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let cols = self.value(parts[0]).cols();
        let mut out = Vec::new();
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.cols(), cols, "concat_rows column mismatch");
            out.extend_from_slice(pv.data());
        }
        let rows = out.len() / cols.max(1);
        self.push(
            Tensor::matrix(rows, cols, out),
            Op::ConcatRows(parts.to_vec()),
        )
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let av = self.value(a);
        let rows = av.rows();
        let mut out = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            out.extend_from_slice(&av.row_slice(r)[start..end]);
        }
        self.push(
            Tensor::matrix(rows, end - start, out),
            Op::SliceCols(a, start, end),
        )
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let av = self.value(a);
        let c = av.cols();
        let out = av.data()[start * c..end * c].to_vec();
        self.push(
            Tensor::matrix(end - start, c, out),
            Op::SliceRows(a, start, end),
        )
    }

    /// Embedding lookup: rows `indices` of a parameter table.
    pub fn gather_rows(&mut self, table: ParamId, indices: &[usize]) -> Var {
        let tv = self.store.value(table);
        let c = tv.cols();
        let mut out = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            out.extend_from_slice(tv.row_slice(i));
        }
        self.push(
            Tensor::matrix(indices.len(), c, out),
            Op::GatherRows(table, indices.to_vec()),
        )
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let c = av.cols();
        let mut out = av.clone();
        for row in out.data_mut().chunks_mut(c) {
            softmax_in_place(row);
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    /// `log Σ exp` over each row, giving a column vector.
    pub fn logsumexp_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let rows = av.rows();
        let out: Vec<f64> = (0..rows).map(|r| logsumexp(av.row_slice(r))).collect();
        self.push(Tensor::matrix(rows, 1, out), Op::LogSumExpRows(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Records a scalar whose local gradients were computed by the caller.
    pub fn fused_scalar(&mut self, value: f64, local_grads: Vec<(Var, Tensor)>) -> Var {
        for (v, g) in &local_grads {
            assert_eq!(self.value(*v).shape(), g.shape(), "fused gradient shape");
        }
        self.push(Tensor::scalar(value), Op::Fused(local_grads))
    }

    /// Reverse pass from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        let mut param_grads: Vec<Option<Tensor>> = vec![None; self.store.len()];
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let out = Var(idx);
            match &self.nodes[idx].op {
                Op::Constant => {}
                Op::Param(id) => add_into(&mut param_grads[id.0], g),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = zeros_slot(&mut grads[a.0], av.shape());
                    gemm(&g, false, bv, true, ga.data_mut(), 1.0);
                    let gb = zeros_slot(&mut grads[b.0], bv.shape());
                    gemm(av, true, &g, false, gb.data_mut(), 1.0);
                }
                Op::Add(a, b) => {
                    add_into(&mut grads[b.0], g.clone());
                    add_into(&mut grads[a.0], g);
                }
                Op::Sub(a, b) => {
                    add_into(&mut grads[b.0], g.map(|x| -x));
                    add_into(&mut grads[a.0], g);
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |x, y| x * y);
                    let gb = g.zip_map(self.value(*a), |x, y| x * y);
                    add_into(&mut grads[a.0], ga);
                    add_into(&mut grads[b.0], gb);
                }
                Op::AddRow(a, row) => {
                    let cols = g.cols();
                    let mut gr = vec![0.0; cols];
                    for (i, x) in g.data().iter().enumerate() {
                        gr[i % cols] += x;
                    }
                    let shape = self.value(*row).shape().to_vec();
                    add_into(&mut grads[row.0], Tensor::new(shape, gr));
                    add_into(&mut grads[a.0], g);
                }
                Op::MulConst(a, c) => add_into(&mut grads[a.0], g.zip_map(c, |x, y| x * y)),
                Op::Affine(a, scale) => add_into(&mut grads[a.0], g.map(|x| x * scale)),
                Op::Sigmoid(a) => {
                    let d = g.zip_map(self.value(out), |x, y| x * y * (1.0 - y));
                    add_into(&mut grads[a.0], d);
                }
                Op::Tanh(a) => {
                    let d = g.zip_map(self.value(out), |x, y| x * (1.0 - y * y));
                    add_into(&mut grads[a.0], d);
                }
                Op::Exp(a) => {
                    let d = g.zip_map(self.value(out), |x, y| x * y);
                    add_into(&mut grads[a.0], d);
                }
                Op::Log(a) => {
                    let d = g.zip_map(self.value(*a), |x, y| x / y);
                    add_into(&mut grads[a.0], d);
                }
                Op::ConcatCols(parts) => {
                    let rows = g.rows();
                    let total = g.cols();
                    let mut offset = 0;
                    for p in parts {
                        let w = self.value(*p).cols();
                        let mut part = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            part.extend_from_slice(
                                &g.data()[r * total + offset..r * total + offset + w],
                            );
                        }
                        let shape = self.value(*p).shape().to_vec();
                        add_into(&mut grads[p.0], Tensor::new(shape, part));
                        offset += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.value(*p).len();
                        let shape = self.value(*p).shape().to_vec();
                        let part = g.data()[offset..offset + n].to_vec();
                        add_into(&mut grads[p.0], Tensor::new(shape, part));
                        offset += n;
                    }
                }
                Op::SliceCols(a, start, end) => {
                    let av = self.value(*a);
                    let cols = av.cols();
                    let ga = zeros_slot(&mut grads[a.0], av.shape());
                    let w = end - start;
                    for r in 0..g.rows() {
                        let dst = &mut ga.data_mut()[r * cols + start..r * cols + end];
                        for (d, s) in dst.iter_mut().zip(&g.data()[r * w..(r + 1) * w]) {
                            *d += s;
                        }
                    }
                }
                Op::SliceRows(a, start, end) => {
                    let av = self.value(*a);
                    let cols = av.cols();
                    let ga = zeros_slot(&mut grads[a.0], av.shape());
                    let dst = &mut ga.data_mut()[start * cols..end * cols];
                    for (d, s) in dst.iter_mut().zip(g.data()) {
                        *d += s;
                    }
                }
                Op::GatherRows(table, indices) => {
                    let tv = self.store.value(*table);
                    let cols = tv.cols();
                    let gt = zeros_slot(&mut param_grads[table.0], tv.shape());
                    for (r, &i) in indices.iter().enumerate() {
                        let dst = &mut gt.data_mut()[i * cols..(i + 1) * cols];
                        for (d, s) in dst.iter_mut().zip(g.row_slice(r)) {
                            *d += s;
                        }
                    }
                }
                Op::Transpose(a) => add_into(&mut grads[a.0], g.transpose()),
                Op::SoftmaxRows(a) => {
                    let y = self.value(out);
                    let cols = y.cols();
                    let mut d = g.clone();
                    for (drow, yrow) in d.data_mut().chunks_mut(cols).zip(y.data().chunks(cols)) {
                        let dot: f64 = drow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                        for (dx, yx) in drow.iter_mut().zip(yrow) {
                            *dx = yx * (*dx - dot);
                        }
                    }
                    add_into(&mut grads[a.0], d);
                }
                Op::LogSumExpRows(a) => {
                    let av = self.value(*a);
                    let cols = av.cols();
                    let mut d = av.clone();
                    for (r, row) in d.data_mut().chunks_mut(cols).enumerate() {
                        softmax_in_place(row);
                        let gr = g.data()[r];
                        row.iter_mut().for_each(|x| *x *= gr);
                    }
                    add_into(&mut grads[a.0], d);
                }
                Op::Sum(a) => {
                    let s = g.item();
                    let shape = self.value(*a).shape().to_vec();
                    add_into(&mut grads[a.0], Tensor::filled(&shape, s));
                }
                Op::Fused(locals) => {
                    let s = g.item();
                    for (v, local) in locals {
                        add_into(&mut grads[v.0], local.map(|x| x * s));
                    }
                }
            }
        }
        Gradients { grads: param_grads }
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

pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (*x - m).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}
