//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so the node index order is a
//! topological order and `backward` simply walks it in reverse.

use std::collections::HashMap;

use crate::autodiff::params::ParamStore;
use crate::autodiff::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

const NORM_FLOOR: f64 = 1e-12;

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
    Linear { x: Var, w: Var, b: Var },
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Concat(Var, Var),
    SliceCols { x: Var, start: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Mean(Var),
    L1(Var, Var),
    SqL2(Var, Var),
    Cosine(Var, Var),
    SoftmaxCe { logits: Var, labels: Vec<usize> },
    BceLogits { logits: Var, target: f64 },
}

struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
    param: Option<String>,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
}

/// Adjoints produced by [`Graph::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.adjoints.get(v.0).and_then(Option::as_ref)
    }
}

fn shape_err(op: &str, a: &[usize], b: &[usize]) -> Error {
    Error::Shape(format!("{op}: incompatible shapes {a:?} and {b:?}"))
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

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("forward value of {op:?}")));
        }
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
            param: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Constant input; no gradient is tracked for it.
    pub fn input(&mut self, t: Tensor) -> Result<Var> {
        self.push(Op::Leaf, t, false)
    }

    /// Leaf whose gradient is tracked.
    pub fn variable(&mut self, t: Tensor) -> Result<Var> {
        self.push(Op::Leaf, t, true)
    }

    /// Leaf bound to a named parameter of `store`. A parameter appears at most
    /// once per graph; repeated requests return the same node. Untrainable
    /// parameters behave like constants.
    pub fn param(&mut self, store: &ParamStore, name: &str, trainable: bool) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = store
            .get(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?
            .clone();
        let v = self.push(Op::Leaf, value, trainable)?;
        self.nodes[v.0].param = Some(name.to_string());
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    /// Trainable parameter nodes recorded in this graph.
    pub fn param_vars(&self) -> impl Iterator<Item = (&str, Var)> + '_ {
        self.params
            .iter()
            .filter(|(_, v)| self.nodes[v.0].requires_grad)
            .map(|(n, v)| (n.as_str(), *v))
    }

    fn two_d(&self, v: Var, op: &str) -> Result<(usize, usize)> {
        let s = self.value(v).shape();
        if s.len() != 2 {
            return Err(Error::Shape(format!("{op}: expected a matrix, got shape {s:?}")));
        }
        Ok((s[0], s[1]))
    }

    /// `y = x W^T + b` with `x: [batch, in]`, `W: [out, in]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (batch, inp) = self.two_d(x, "linear")?;
        let (out, w_in) = self.two_d(w, "linear")?;
        if w_in != inp || self.value(b).len() != out {
            return Err(shape_err("linear", self.value(x).shape(), self.value(w).shape()));
        }
        let mut y = vec![0.0; batch * out];
        for r in 0..batch {
            y[r * out..(r + 1) * out].copy_from_slice(self.value(b).data());
        }
        gemm(
            batch,
            inp,
            out,
            self.value(x).data(),
            false,
            self.value(w).data(),
            true,
            1.0,
            &mut y,
        );
        let rg = self.rg(&[x, w, b]);
        self.push(Op::Linear { x, w, b }, Tensor::new(vec![batch, out], y)?, rg)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).map(|a| a.max(0.0));
        let rg = self.rg(&[x]);
        self.push(Op::Relu(x), v, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).map(sigmoid);
        let rg = self.rg(&[x]);
        self.push(Op::Sigmoid(x), v, rg)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).map(f64::exp);
        let rg = self.rg(&[x]);
        self.push(Op::Exp(x), v, rg)
    }

    /// Column-wise concatenation of two matrices with the same row count.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.two_d(a, "concat")?;
        let (rb, cb) = self.two_d(b, "concat")?;
        if ra != rb {
            return Err(shape_err("concat", self.value(a).shape(), self.value(b).shape()));
        }
        let mut data = Vec::with_capacity(ra * (ca + cb));
        for r in 0..ra {
            data.extend_from_slice(self.value(a).row(r));
            data.extend_from_slice(self.value(b).row(r));
        }
        let rg = self.rg(&[a, b]);
        self.push(Op::Concat(a, b), Tensor::new(vec![ra, ca + cb], data)?, rg)
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, cols) = self.two_d(x, "slice_cols")?;
        if start >= end || end > cols {
            return Err(Error::Shape(format!("slice_cols: {start}..{end} out of {cols}")));
        }
        let mut data = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            data.extend_from_slice(&self.value(x).row(r)[start..end]);
        }
        let rg = self.rg(&[x]);
        self.push(Op::SliceCols { x, start }, Tensor::new(vec![rows, end - start], data)?, rg)
    }

    fn same_shape(&self, a: Var, b: Var, op: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(shape_err(op, self.value(a).shape(), self.value(b).shape()));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(&[a, b]);
        self.push(Op::Add(a, b), v, rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(&[a, b]);
        self.push(Op::Sub(a, b), v, rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(&[a, b]);
        self.push(Op::Mul(a, b), v, rg)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let v = self.value(x).map(|a| a * c);
        let rg = self.rg(&[x]);
        self.push(Op::Scale(x, c), v, rg)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let v = Tensor::scalar(self.value(x).sum());
        let rg = self.rg(&[x]);
        self.push(Op::Sum(x), v, rg)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let v = Tensor::scalar(t.sum() / t.len().max(1) as f64);
        let rg = self.rg(&[x]);
        self.push(Op::Mean(x), v, rg)
    }

    /// Mean absolute difference over every element.
    pub fn l1_distance(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "l1_distance")?;
        let (ta, tb) = (self.value(a), self.value(b));
        let total: f64 = ta.data().iter().zip(tb.data()).map(|(x, y)| (x - y).abs()).sum();
        let v = Tensor::scalar(total / ta.len().max(1) as f64);
        let rg = self.rg(&[a, b]);
        self.push(Op::L1(a, b), v, rg)
    }

    /// Squared Euclidean distance per row, averaged over rows.
    pub fn sq_l2_distance(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sq_l2_distance")?;
        let (ta, tb) = (self.value(a), self.value(b));
        let total: f64 = ta.data().iter().zip(tb.data()).map(|(x, y)| (x - y) * (x - y)).sum();
        let v = Tensor::scalar(total / ta.rows().max(1) as f64);
        let rg = self.rg(&[a, b]);
        self.push(Op::SqL2(a, b), v, rg)
    }

    /// Row-wise cosine similarity, `[batch, d] x [batch, d] -> [batch, 1]`.
    pub fn cosine_similarity(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "cosine_similarity")?;
        let (rows, _) = self.two_d(a, "cosine_similarity")?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = (0..rows)
            .map(|r| {
                let (x, y) = (ta.row(r), tb.row(r));
                let (dot, nx, ny) = dot_norms(x, y);
                dot / (nx * ny)
            })
            .collect();
        let rg = self.rg(&[a, b]);
        self.push(Op::Cosine(a, b), Tensor::new(vec![rows, 1], data)?, rg)
    }

    /// Mean softmax cross-entropy of `[batch, classes]` logits against labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (rows, classes) = self.two_d(logits, "softmax_cross_entropy")?;
        if labels.len() != rows || labels.iter().any(|&l| l >= classes) {
            return Err(Error::Shape(format!(
                "softmax_cross_entropy: {} labels for {rows} rows of {classes} classes",
                labels.len()
            )));
        }
        let t = self.value(logits);
        let total: f64 = (0..rows)
            .map(|r| {
                let row = t.row(r);
                log_sum_exp(row) - row[labels[r]]
            })
            .sum();
        let v = Tensor::scalar(total / rows as f64);
        let rg = self.rg(&[logits]);
        self.push(
            Op::SoftmaxCe {
                logits,
                labels: labels.to_vec(),
            },
            v,
            rg,
        )
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against a constant target,
    /// evaluated in the numerically stable log-sum-exp form.
    pub fn bce_with_logits(&mut self, logits: Var, target: f64) -> Result<Var> {
        let t = self.value(logits);
        let total: f64 = t.data().iter().map(|&x| softplus(x) - target * x).sum();
        let v = Tensor::scalar(total / t.len().max(1) as f64);
        let rg = self.rg(&[logits]);
        self.push(Op::BceLogits { logits, target }, v, rg)
    }

    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(Tensor::full(lv.shape(), 1.0));
        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                adj[idx] = Some(g);
                continue;
            }
            self.propagate(&node.op, &node.value, &g, &mut adj)?;
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("adjoint of node {idx}")));
            }
            adj[idx] = Some(g);
        }
        Ok(Gradients { adjoints: adj })
    }

    fn accumulate(&self, adj: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut adj[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &Tensor, adj: &mut [Option<Tensor>]) -> Result<()> {
        match op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (batch, inp) = (xv.rows(), xv.cols());
                let outd = wv.rows();
                if self.nodes[x.0].requires_grad {
                    let mut dx = vec![0.0; batch * inp];
                    gemm(batch, outd, inp, g.data(), false, wv.data(), false, 0.0, &mut dx);
                    self.accumulate(adj, *x, Tensor::new(xv.shape().to_vec(), dx)?);
                }
                if self.nodes[w.0].requires_grad {
                    let mut dw = vec![0.0; outd * inp];
                    gemm(outd, batch, inp, g.data(), true, xv.data(), false, 0.0, &mut dw);
                    self.accumulate(adj, *w, Tensor::new(wv.shape().to_vec(), dw)?);
                }
                if self.nodes[b.0].requires_grad {
                    let mut db = vec![0.0; outd];
                    for r in 0..batch {
                        for (d, v) in db.iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    self.accumulate(adj, *b, Tensor::new(self.value(*b).shape().to_vec(), db)?);
                }
            }
            Op::Relu(x) => {
                let d = self.value(*x).zip_map(g, |a, gv| if a > 0.0 { gv } else { 0.0 });
                self.accumulate(adj, *x, d);
            }
            Op::Sigmoid(x) => {
                let d = out.zip_map(g, |s, gv| gv * s * (1.0 - s));
                self.accumulate(adj, *x, d);
            }
            Op::Exp(x) => {
                let d = out.zip_map(g, |e, gv| gv * e);
                self.accumulate(adj, *x, d);
            }
            Op::Concat(a, b) => {
                let ca = self.value(*a).cols();
                let cb = self.value(*b).cols();
                let rows = out.rows();
                let mut da = Vec::with_capacity(rows * ca);
                let mut db = Vec::with_capacity(rows * cb);
                for r in 0..rows {
                    let gr = g.row(r);
                    da.extend_from_slice(&gr[..ca]);
                    db.extend_from_slice(&gr[ca..]);
                }
                self.accumulate(adj, *a, Tensor::new(self.value(*a).shape().to_vec(), da)?);
                self.accumulate(adj, *b, Tensor::new(self.value(*b).shape().to_vec(), db)?);
            }
            Op::SliceCols { x, start } => {
                let xv = self.value(*x);
                let (rows, cols) = (xv.rows(), xv.cols());
                let width = out.cols();
                let mut d = vec![0.0; rows * cols];
                for r in 0..rows {
                    d[r * cols + start..r * cols + start + width].copy_from_slice(g.row(r));
                }
                self.accumulate(adj, *x, Tensor::new(xv.shape().to_vec(), d)?);
            }
            Op::Add(a, b) => {
                self.accumulate(adj, *a, g.clone());
                self.accumulate(adj, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(adj, *a, g.clone());
                self.accumulate(adj, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let da = self.value(*b).zip_map(g, |y, gv| y * gv);
                let db = self.value(*a).zip_map(g, |x, gv| x * gv);
                self.accumulate(adj, *a, da);
                self.accumulate(adj, *b, db);
            }
            Op::Scale(x, c) => self.accumulate(adj, *x, g.map(|v| v * c)),
            Op::Sum(x) => {
                let gv = g.item();
                self.accumulate(adj, *x, Tensor::full(self.value(*x).shape(), gv));
            }
            Op::Mean(x) => {
                let xv = self.value(*x);
                let gv = g.item() / xv.len().max(1) as f64;
                self.accumulate(adj, *x, Tensor::full(xv.shape(), gv));
            }
            Op::L1(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let s = g.item() / ta.len().max(1) as f64;
                let d = ta.zip_map(tb, |x, y| s * sign(x - y));
                self.accumulate(adj, *b, d.map(|v| -v));
                self.accumulate(adj, *a, d);
            }
            Op::SqL2(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let s = 2.0 * g.item() / ta.rows().max(1) as f64;
                let d = ta.zip_map(tb, |x, y| s * (x - y));
                self.accumulate(adj, *b, d.map(|v| -v));
                self.accumulate(adj, *a, d);
            }
            Op::Cosine(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (rows, cols) = (ta.rows(), ta.cols());
                let mut da = vec![0.0; rows * cols];
                let mut db = vec![0.0; rows * cols];
                for r in 0..rows {
                    let (x, y) = (ta.row(r), tb.row(r));
                    let (dot, nx, ny) = dot_norms(x, y);
                    let cos = dot / (nx * ny);
                    let gv = g.data()[r];
                    for j in 0..cols {
                        da[r * cols + j] = gv * (y[j] / (nx * ny) - cos * x[j] / (nx * nx));
                        db[r * cols + j] = gv * (x[j] / (nx * ny) - cos * y[j] / (ny * ny));
                    }
                }
                self.accumulate(adj, *a, Tensor::new(ta.shape().to_vec(), da)?);
                self.accumulate(adj, *b, Tensor::new(tb.shape().to_vec(), db)?);
            }
            Op::SoftmaxCe { logits, labels } => {
                let t = self.value(*logits);
                let (rows, cols) = (t.rows(), t.cols());
                let s = g.item() / rows as f64;
                let mut d = vec![0.0; rows * cols];
                for r in 0..rows {
                    let row = t.row(r);
                    let lse = log_sum_exp(row);
                    for j in 0..cols {
                        let p = (row[j] - lse).exp();
                        d[r * cols + j] = s * (p - if j == labels[r] { 1.0 } else { 0.0 });
                    }
                }
                self.accumulate(adj, *logits, Tensor::new(t.shape().to_vec(), d)?);
            }
            Op::BceLogits { logits, target } => {
                let t = self.value(*logits);
                let s = g.item() / t.len().max(1) as f64;
                let d = t.map(|x| s * (sigmoid(x) - target));
                self.accumulate(adj, *logits, d);
            }
        }
        Ok(())
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
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

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn dot_norms(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let mut dot = 0.0;
    let mut nx = 0.0;
    let mut ny = 0.0;
    for (a, b) in x.iter().zip(y) {
        dot += a * b;
        nx += a * a;
        ny += b * b;
    }
    (dot, nx.sqrt().max(NORM_FLOOR), ny.sqrt().max(NORM_FLOOR))
}
