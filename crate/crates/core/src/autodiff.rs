//! Reverse-mode automatic differentiation on a linear tape.
//!
//! Every operation appends a node holding its output value. Nodes only refer
//! to earlier nodes, so the tape is acyclic by construction and `backward`
//! is a single sweep in reverse insertion order. A tape is built per forward
//! pass and dropped afterwards.

use crate::error::{Error, Result};
use crate::tensor::{Tensor, NORM_FLOOR};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    BiasAdd(Var, Var),
    Silu(Var),
    Tanh(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Sum(Var),
    Mean(Var),
    SqNorm(Var),
    RowSqNorm(Var),
    Dot(Var, Var),
    Cosine(Var, Var),
    Concat(Vec<Var>),
    Slice(Var, usize, usize),
    GatherRows(Var, Vec<usize>),
    NormalizeRows(Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of a forward computation.
#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    enabled: bool,
    leaf_grads: Vec<Option<Vec<f64>>>,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            enabled: true,
            leaf_grads: Vec::new(),
        }
    }

    /// A tape that evaluates values but never records gradients.
    pub fn no_grad() -> Self {
        Tape {
            enabled: false,
            ..Tape::new()
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf. It participates in gradients iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        let requires_grad = self.enabled && t.requires_grad();
        let value = Tensor::new(t.shape().to_vec(), t.data().to_vec()).unwrap();
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Records a leaf that takes ownership of its data and never needs a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t.with_requires_grad(false), Op::Leaf, false)
    }

    /// Records a leaf that requires a gradient.
    pub fn variable(&mut self, t: Tensor) -> Var {
        let requires_grad = self.enabled;
        self.push(t, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, present after `backward` for every leaf
    /// that requires a gradient.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.leaf_grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn zero_grad(&mut self) {
        self.leaf_grads.clear();
    }

    /// Adds the leaf gradient of `v` into `t.grad`.
    pub fn write_grad(&self, v: Var, t: &mut Tensor) -> Result<()> {
        match self.grad(v) {
            Some(g) => t.accumulate_grad(g),
            None => Ok(()),
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        self.enabled && vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn dims(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        let t = self.value(v);
        t.rows_cols()
            .ok_or_else(|| Error::shape(op, t.shape(), &[]))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, sa, sb));
        }
        Ok(())
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let t = self.value(a);
        let data = t.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::new(t.shape().to_vec(), data).unwrap();
        let rg = self.any_grad(&[a]);
        self.push(value, op, rg)
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data).unwrap();
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, Op::Scale(a, s), |x| s * x)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + s)
    }

    pub fn silu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Silu(a), |x| x * sigmoid(x))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        let (m, k, n) = match (sa, sb) {
            ([m, k], [k2, n]) if k == k2 => (*m, *k, *n),
            _ => return Err(Error::shape("matmul", sa, sb)),
        };
        let mut out = vec![0.0; m * n];
        gemm(
            (m, k, n),
            self.value(a).data(),
            (k, 1),
            self.value(b).data(),
            (n, 1),
            &mut out,
            0.0,
        );
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), rg))
    }

    /// Adds a length-`n` bias to every row of an `[m, n]` matrix.
    pub fn bias_add(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.dims(x, "bias_add")?;
        let tb = self.value(bias);
        if tb.len() != n {
            return Err(Error::shape("bias_add", self.value(x).shape(), tb.shape()));
        }
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(n) {
            row.iter_mut().zip(tb.data()).for_each(|(o, b)| *o += b);
        }
        let shape = self.value(x).shape().to_vec();
        debug_assert_eq!(out.len(), m * n);
        let rg = self.any_grad(&[x, bias]);
        Ok(self.push(Tensor::new(shape, out)?, Op::BiasAdd(x, bias), rg))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let (_, n) = self.dims(a, "softmax")?;
        let t = self.value(a);
        let mut out = t.data().to_vec();
        out.chunks_mut(n).for_each(softmax_in_place);
        let value = Tensor::new(t.shape().to_vec(), out)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(value, Op::Softmax(a), rg))
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let (_, n) = self.dims(a, "log_softmax")?;
        let t = self.value(a);
        let mut out = t.data().to_vec();
        for row in out.chunks_mut(n) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|x| *x -= lse);
        }
        let value = Tensor::new(t.shape().to_vec(), out)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(value, Op::LogSoftmax(a), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.any_grad(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        let rg = self.any_grad(&[a]);
        self.push(Tensor::scalar(s), Op::Mean(a), rg)
    }

    /// Squared L2 norm of all entries.
    pub fn sq_norm(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().map(|x| x * x).sum();
        let rg = self.any_grad(&[a]);
        self.push(Tensor::scalar(s), Op::SqNorm(a), rg)
    }

    /// Squared L2 norm of each row.
    pub fn row_sq_norm(&mut self, a: Var) -> Result<Var> {
        self.dims(a, "row_sq_norm")?;
        let t = self.value(a);
        let out: Vec<f64> = t.rows().map(|r| r.iter().map(|x| x * x).sum()).collect();
        let value = row_reduced(t, out);
        let rg = self.any_grad(&[a]);
        Ok(self.push(value, Op::RowSqNorm(a), rg))
    }

    /// Inner product of all entries.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("dot", a, b)?;
        let s = crate::tensor::dot(self.value(a).data(), self.value(b).data());
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::scalar(s), Op::Dot(a, b), rg))
    }

    /// Row-wise cosine similarity. A 1-D pair yields a scalar.
    pub fn cosine_similarity(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("cosine_similarity", a, b)?;
        self.dims(a, "cosine_similarity")?;
        let (ta, tb) = (self.value(a), self.value(b));
        let out: Vec<f64> = ta
            .rows()
            .zip(tb.rows())
            .map(|(x, y)| crate::tensor::cosine(x, y))
            .collect();
        let value = row_reduced(ta, out);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Cosine(a, b), rg))
    }

    /// Concatenates along columns; all inputs must have the same row count.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::shape("concat", &[], &[]))?;
        let (rows, _) = self.dims(first, "concat")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.dims(p, "concat")?;
            if r != rows {
                return Err(Error::shape("concat", self.value(first).shape(), self.value(p).shape()));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let rg = self.any_grad(parts);
        Ok(self.push(Tensor::matrix(rows, total, out)?, Op::Concat(parts.to_vec()), rg))
    }

    /// Columns `start..end` of every row.
    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, cols) = self.dims(a, "slice")?;
        if start >= end || end > cols {
            return Err(Error::shape("slice", self.value(a).shape(), &[start, end]));
        }
        let t = self.value(a);
        let out: Vec<f64> = t.rows().flat_map(|r| r[start..end].iter().copied()).collect();
        let rg = self.any_grad(&[a]);
        Ok(self.push(Tensor::matrix(rows, end - start, out)?, Op::Slice(a, start, end), rg))
    }

    /// Selects rows of a `[v, e]` table, producing `[ids.len(), e]`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, e) = self.dims(table, "gather_rows")?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::shape("gather_rows", self.value(table).shape(), &[bad]));
        }
        let t = self.value(table);
        let out: Vec<f64> = ids.iter().flat_map(|&i| t.row(i).iter().copied()).collect();
        let rg = self.any_grad(&[table]);
        Ok(self.push(
            Tensor::matrix(ids.len(), e, out)?,
            Op::GatherRows(table, ids.to_vec()),
            rg,
        ))
    }

    /// Scales each row to unit L2 norm.
    pub fn normalize_rows(&mut self, a: Var) -> Result<Var> {
        self.dims(a, "normalize_rows")?;
        let t = self.value(a);
        let out: Vec<f64> = t
            .rows()
            .flat_map(|r| {
                let n = crate::tensor::norm(r).max(NORM_FLOOR);
                r.iter().map(move |x| x / n)
            })
            .collect();
        let value = Tensor::new(t.shape().to_vec(), out)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(value, Op::NormalizeRows(a), rg))
    }

    /// Back-propagates from a scalar loss, adding into every leaf gradient.
    ///
    /// Leaves that require a gradient but are disconnected from `loss` receive
    /// zeros. Repeated calls accumulate until [`Tape::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::NonScalarLoss(lt.shape().to_vec()));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);
        if self.leaf_grads.len() < self.nodes.len() {
            self.leaf_grads.resize(self.nodes.len(), None);
        }

        for i in (0..n).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                let g = grads[i].take().unwrap_or_else(|| vec![0.0; node.value.len()]);
                match &mut self.leaf_grads[i] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot => *slot = Some(g),
                }
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
        }
        // Leaves recorded after the loss are disconnected from it.
        for i in n..self.nodes.len() {
            let node = &self.nodes[i];
            if node.requires_grad && matches!(node.op, Op::Leaf) && self.leaf_grads[i].is_none() {
                self.leaf_grads[i] = Some(vec![0.0; node.value.len()]);
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        let mut send = |v: Var, contribution: Vec<f64>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.iter_mut().zip(&contribution).for_each(|(a, b)| *a += b),
                slot => *slot = Some(contribution),
            }
        };
        let val = |v: Var| self.nodes[v.0].value.data();
        let wants = |v: Var| self.nodes[v.0].requires_grad;

        match &node.op {
            Op::Leaf => unreachable!(),
            Op::Add(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.iter().map(|x| -x).collect());
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    send(*a, g.iter().zip(val(*b)).map(|(g, y)| g * y).collect());
                }
                if wants(*b) {
                    send(*b, g.iter().zip(val(*a)).map(|(g, x)| g * x).collect());
                }
            }
            Op::Scale(a, s) => send(*a, g.iter().map(|x| s * x).collect()),
            Op::AddScalar(a) => send(*a, g.to_vec()),
            Op::MatMul(a, b) => {
                let (m, k) = self.nodes[a.0].value.rows_cols().unwrap();
                let (_, n) = out.rows_cols().unwrap();
                if wants(*a) {
                    // dA = dC · Bᵀ
                    let mut da = vec![0.0; m * k];
                    gemm((m, n, k), g, (n, 1), val(*b), (1, n), &mut da, 0.0);
                    send(*a, da);
                }
                if wants(*b) {
                    // dB = Aᵀ · dC
                    let mut db = vec![0.0; k * n];
                    gemm((k, m, n), val(*a), (1, k), g, (n, 1), &mut db, 0.0);
                    send(*b, db);
                }
            }
            Op::BiasAdd(x, bias) => {
                send(*x, g.to_vec());
                if wants(*bias) {
                    let n = self.nodes[bias.0].value.len();
                    let mut db = vec![0.0; n];
                    for row in g.chunks(n) {
                        db.iter_mut().zip(row).for_each(|(d, r)| *d += r);
                    }
                    send(*bias, db);
                }
            }
            Op::Silu(a) => {
                let d = val(*a)
                    .iter()
                    .zip(g)
                    .map(|(&x, g)| {
                        let s = sigmoid(x);
                        g * s * (1.0 + x * (1.0 - s))
                    })
                    .collect();
                send(*a, d);
            }
            Op::Tanh(a) => {
                let d = out.data().iter().zip(g).map(|(y, g)| g * (1.0 - y * y)).collect();
                send(*a, d);
            }
            Op::Softmax(a) => {
                let (_, n) = out.rows_cols().unwrap();
                let mut d = Vec::with_capacity(g.len());
                for (y, gr) in out.data().chunks(n).zip(g.chunks(n)) {
                    let s = crate::tensor::dot(y, gr);
                    d.extend(y.iter().zip(gr).map(|(y, g)| y * (g - s)));
                }
                send(*a, d);
            }
            Op::LogSoftmax(a) => {
                let (_, n) = out.rows_cols().unwrap();
                let mut d = Vec::with_capacity(g.len());
                for (y, gr) in out.data().chunks(n).zip(g.chunks(n)) {
                    let s: f64 = gr.iter().sum();
                    d.extend(y.iter().zip(gr).map(|(y, g)| g - y.exp() * s));
                }
                send(*a, d);
            }
            Op::Sum(a) => send(*a, vec![g[0]; self.nodes[a.0].value.len()]),
            Op::Mean(a) => {
                let n = self.nodes[a.0].value.len();
                send(*a, vec![g[0] / n as f64; n]);
            }
            Op::SqNorm(a) => send(*a, val(*a).iter().map(|x| 2.0 * x * g[0]).collect()),
            Op::RowSqNorm(a) => {
                let (_, n) = self.nodes[a.0].value.rows_cols().unwrap();
                let d = val(*a)
                    .chunks(n)
                    .zip(g)
                    .flat_map(|(r, g)| r.iter().map(move |x| 2.0 * x * g))
                    .collect();
                send(*a, d);
            }
            Op::Dot(a, b) => {
                if wants(*a) {
                    send(*a, val(*b).iter().map(|y| y * g[0]).collect());
                }
                if wants(*b) {
                    send(*b, val(*a).iter().map(|x| x * g[0]).collect());
                }
            }
            Op::Cosine(a, b) => {
                let (_, n) = self.nodes[a.0].value.rows_cols().unwrap();
                let (xa, xb) = (val(*a), val(*b));
                let mut da = Vec::with_capacity(xa.len());
                let mut db = Vec::with_capacity(xb.len());
                for ((ra, rb), (&c, &gr)) in xa.chunks(n).zip(xb.chunks(n)).zip(out.data().iter().zip(g)) {
                    let na = crate::tensor::norm(ra).max(NORM_FLOOR);
                    let nb = crate::tensor::norm(rb).max(NORM_FLOOR);
                    let inv = 1.0 / (na * nb);
                    da.extend(ra.iter().zip(rb).map(|(x, y)| gr * (y * inv - c * x / (na * na))));
                    db.extend(ra.iter().zip(rb).map(|(x, y)| gr * (x * inv - c * y / (nb * nb))));
                }
                if wants(*a) {
                    send(*a, da);
                }
                if wants(*b) {
                    send(*b, db);
                }
            }
            Op::Concat(parts) => {
                let (rows, total) = out.rows_cols().unwrap();
                let mut offset = 0;
                for &p in parts {
                    let (_, w) = self.nodes[p.0].value.rows_cols().unwrap();
                    if wants(p) {
                        let d = (0..rows)
                            .flat_map(|r| g[r * total + offset..r * total + offset + w].iter().copied())
                            .collect();
                        send(p, d);
                    }
                    offset += w;
                }
            }
            Op::Slice(a, start, end) => {
                let (rows, cols) = self.nodes[a.0].value.rows_cols().unwrap();
                let w = end - start;
                let mut d = vec![0.0; rows * cols];
                for r in 0..rows {
                    d[r * cols + start..r * cols + end].copy_from_slice(&g[r * w..(r + 1) * w]);
                }
                send(*a, d);
            }
            Op::GatherRows(table, ids) => {
                let (v, e) = self.nodes[table.0].value.rows_cols().unwrap();
                let mut d = vec![0.0; v * e];
                for (r, &id) in ids.iter().enumerate() {
                    d[id * e..(id + 1) * e]
                        .iter_mut()
                        .zip(&g[r * e..(r + 1) * e])
                        .for_each(|(d, g)| *d += g);
                }
                send(*table, d);
            }
            Op::NormalizeRows(a) => {
                let (_, n) = out.rows_cols().unwrap();
                let mut d = Vec::with_capacity(g.len());
                for ((x, y), gr) in val(*a).chunks(n).zip(out.data().chunks(n)).zip(g.chunks(n)) {
                    let nx = crate::tensor::norm(x).max(NORM_FLOOR);
                    let yg = crate::tensor::dot(y, gr);
                    d.extend(y.iter().zip(gr).map(|(y, g)| (g - y * yg) / nx));
                }
                send(*a, d);
            }
        }
    }
}

fn row_reduced(input: &Tensor, out: Vec<f64>) -> Tensor {
    if input.shape().len() == 2 {
        Tensor::vector(out)
    } else {
        Tensor::scalar(out[0])
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    row.iter_mut().for_each(|x| *x = (*x - max).exp());
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= s);
}

/// `c = a · b + beta · c` for `(m, k, n)` with explicit (row, col) strides.
fn gemm(
    (m, k, n): (usize, usize, usize),
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    beta: f64,
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: the strides above address only elements inside `a` (m x k),
    // `b` (k x n) and `c` (m x n, row-major), whose lengths callers guarantee.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
