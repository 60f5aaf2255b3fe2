//! Tape-based reverse-mode differentiation over dense 2-D tensors.
//!
//! Operations append nodes to a [`Tape`]; every node only references nodes
//! recorded before it, so walking the tape backwards from the loss visits
//! nodes in reverse topological order. Gradients flowing into a node from
//! several consumers are summed.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    ScaleBy(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    SumRows(Var),
    MeanRows(Var),
    Relu(Var),
    Sigmoid(Var),
    Abs(Var),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Arc<[usize]>),
    ScatterAddRows(Var, Arc<[usize]>),
    SoftmaxCrossEntropy {
        logits: Var,
        targets: Arc<[usize]>,
        probs: Vec<f64>,
    },
    L1(Var),
    StraightThrough(Var),
}

#[derive(Debug)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every node that required them.
#[derive(Debug)]
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

/// `c = alpha * a * b + beta * c` over strided row/column layouts.
#[allow(clippy::too_many_arguments)]
fn gemm(
    (n, k, m): (usize, usize, usize),
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if n == 0 || m == 0 || k == 0 {
        return;
    }
    assert!(a.len() > (n - 1) * rsa + (k - 1) * csa);
    assert!(b.len() > (k - 1) * rsb + (m - 1) * csb);
    assert!(c.len() >= n * m);
    // SAFETY: the asserts above bound every index dgemm reads or writes.
    unsafe {
        matrixmultiply::dgemm(
            n,
            k,
            m,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            m as isize,
            1,
        );
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

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
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

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, m: Matrix, requires_grad: bool) -> Var {
        let (r, c) = m.shape();
        self.push(r, c, m.into_vec(), Op::Leaf, requires_grad)
    }

    /// Differentiable input.
    pub fn var(&mut self, m: Matrix) -> Var {
        self.leaf(m, true)
    }

    pub fn constant(&mut self, m: Matrix) -> Var {
        self.leaf(m, false)
    }

    pub fn column(&mut self, values: Vec<f64>) -> Var {
        let n = values.len();
        self.push(n, 1, values, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = self.node(v);
        (n.rows, n.cols)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.node(v).value[0]
    }

    pub fn to_matrix(&self, v: Var) -> Matrix {
        let n = self.node(v);
        Matrix::from_vec(n.rows, n.cols, n.value.clone()).expect("node shape")
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Shape {
                op,
                left: sa,
                right: sb,
            });
        }
        Ok(sa)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((n, k), (k2, m)) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(Error::Shape {
                op: "matmul",
                left: (n, k),
                right: (k2, m),
            });
        }
        let mut out = vec![0.0; n * m];
        gemm((n, k, m), self.value(a), (k, 1), self.value(b), (m, 1), 0.0, &mut out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(n, m, out, Op::MatMul(a, b), rg))
    }

    fn zip_with(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (r, c) = self.same_shape(name, a, b)?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(r, c, out, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a `[1 x c]` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let ((n, c), sr) = (self.shape(x), self.shape(row));
        if sr != (1, c) {
            return Err(Error::Shape {
                op: "add_row",
                left: (n, c),
                right: sr,
            });
        }
        let b = self.value(row);
        let out = self
            .value(x)
            .chunks(c.max(1))
            .flat_map(|r| r.iter().zip(b).map(|(&p, &q)| p + q))
            .collect::<Vec<_>>();
        let rg = self.rg(x) || self.rg(row);
        Ok(self.push(n, c, out, Op::AddRow(x, row), rg))
    }

    /// Multiplies row `i` of `x` by `col[i]`, with `col` of shape `[n x 1]`.
    pub fn mul_col(&mut self, x: Var, col: Var) -> Result<Var> {
        let ((n, c), sc) = (self.shape(x), self.shape(col));
        if sc != (n, 1) {
            return Err(Error::Shape {
                op: "mul_col",
                left: (n, c),
                right: sc,
            });
        }
        let w = self.value(col);
        let mut out = self.value(x).to_vec();
        for (i, &wi) in w.iter().enumerate() {
            for o in &mut out[i * c..(i + 1) * c] {
                *o *= wi;
            }
        }
        let rg = self.rg(x) || self.rg(col);
        Ok(self.push(n, c, out, Op::MulCol(x, col), rg))
    }

    /// Multiplies `x` by the single entry of a `[1 x 1]` tensor.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        let (shape, ss) = (self.shape(x), self.shape(s));
        if ss != (1, 1) {
            return Err(Error::Shape {
                op: "scale_by",
                left: shape,
                right: ss,
            });
        }
        let k = self.scalar(s);
        let out = self.value(x).iter().map(|&v| v * k).collect();
        let rg = self.rg(x) || self.rg(s);
        Ok(self.push(shape.0, shape.1, out, Op::ScaleBy(x, s), rg))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|&v| v * k).collect();
        let rg = self.rg(x);
        self.push(r, c, out, Op::Scale(x, k), rg)
    }

    pub fn add_scalar(&mut self, x: Var, k: f64) -> Var {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|&v| v + k).collect();
        let rg = self.rg(x);
        self.push(r, c, out, Op::AddScalar(x), rg)
    }

    /// Sum over rows: `[n x c] -> [1 x c]`.
    pub fn sum_rows(&mut self, x: Var) -> Var {
        let (n, c) = self.shape(x);
        let mut out = vec![0.0; c];
        for r in self.value(x).chunks(c.max(1)).take(n) {
            for (o, &v) in out.iter_mut().zip(r) {
                *o += v;
            }
        }
        let rg = self.rg(x);
        self.push(1, c, out, Op::SumRows(x), rg)
    }

    /// Mean over rows: `[n x c] -> [1 x c]`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (n, c) = self.shape(x);
        if n == 0 {
            return Err(Error::arg("mean over zero rows"));
        }
        let mut out = vec![0.0; c];
        for r in self.value(x).chunks(c.max(1)).take(n) {
            for (o, &v) in out.iter_mut().zip(r) {
                *o += v;
            }
        }
        let inv = 1.0 / n as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        let rg = self.rg(x);
        Ok(self.push(1, c, out, Op::MeanRows(x), rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|&v| v.max(0.0)).collect();
        let rg = self.rg(x);
        self.push(r, c, out, Op::Relu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|&v| sigmoid(v)).collect();
        let rg = self.rg(x);
        self.push(r, c, out, Op::Sigmoid(x), rg)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|&v| v.abs()).collect();
        let rg = self.rg(x);
        self.push(r, c, out, Op::Abs(x), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::arg("concat of zero tensors"))?;
        let n = self.shape(first).0;
        for &p in parts {
            let s = self.shape(p);
            if s.0 != n {
                return Err(Error::Shape {
                    op: "concat_cols",
                    left: self.shape(first),
                    right: s,
                });
            }
        }
        let total: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Vec::with_capacity(n * total);
        for i in 0..n {
            for &p in parts {
                let c = self.shape(p).1;
                out.extend_from_slice(&self.value(p)[i * c..(i + 1) * c]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(n, total, out, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Row `k` of the result is row `index[k]` of `x`.
    pub fn gather_rows(&mut self, x: Var, index: Arc<[usize]>) -> Result<Var> {
        let (n, c) = self.shape(x);
        let mut out = Vec::with_capacity(index.len() * c);
        for &i in index.iter() {
            if i >= n {
                return Err(Error::arg(format!("gather index {i} out of {n} rows")));
            }
            out.extend_from_slice(&self.value(x)[i * c..(i + 1) * c]);
        }
        let rg = self.rg(x);
        Ok(self.push(index.len(), c, out, Op::GatherRows(x, index), rg))
    }

    /// Row `index[k]` of the `[out_rows x c]` result accumulates row `k` of `x`.
    pub fn scatter_add_rows(&mut self, x: Var, index: Arc<[usize]>, out_rows: usize) -> Result<Var> {
        let (n, c) = self.shape(x);
        if index.len() != n {
            return Err(Error::Shape {
                op: "scatter_add_rows",
                left: (n, c),
                right: (index.len(), 1),
            });
        }
        let mut out = vec![0.0; out_rows * c];
        let xv = self.value(x);
        for (k, &i) in index.iter().enumerate() {
            if i >= out_rows {
                return Err(Error::arg(format!("scatter index {i} out of {out_rows} rows")));
            }
            for (o, &v) in out[i * c..(i + 1) * c].iter_mut().zip(&xv[k * c..(k + 1) * c]) {
                *o += v;
            }
        }
        let rg = self.rg(x);
        Ok(self.push(out_rows, c, out, Op::ScatterAddRows(x, index), rg))
    }

    /// Mean over rows of `-log softmax(logits)[target]`; a `[1 x 1]` scalar.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: Arc<[usize]>) -> Result<Var> {
        let (n, c) = self.shape(logits);
        if targets.len() != n || n == 0 {
            return Err(Error::Shape {
                op: "softmax_cross_entropy",
                left: (n, c),
                right: (targets.len(), 1),
            });
        }
        let mut probs = vec![0.0; n * c];
        let mut loss = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            if t >= c {
                return Err(Error::arg(format!("target class {t} out of {c}")));
            }
            let row = &self.value(logits)[i * c..(i + 1) * c];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|&v| (v - max).exp()).sum();
            for (p, &v) in probs[i * c..(i + 1) * c].iter_mut().zip(row) {
                *p = (v - max).exp() / z;
            }
            loss += z.ln() + max - row[t];
        }
        let rg = self.rg(logits);
        Ok(self.push(
            1,
            1,
            vec![loss / n as f64],
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                probs,
            },
            rg,
        ))
    }

    /// Sum of absolute values; subgradient uses `sign(0) = 0`.
    pub fn l1_norm(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().map(|v| v.abs()).sum();
        let rg = self.rg(x);
        self.push(1, 1, vec![s], Op::L1(x), rg)
    }

    /// Forward: `1` where `x > threshold`, else `0`. Backward: identity.
    pub fn straight_through_threshold(&mut self, x: Var, threshold: f64) -> Result<Var> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::arg(format!("threshold {threshold} outside (0,1)")));
        }
        let (r, c) = self.shape(x);
        let out = self
            .value(x)
            .iter()
            .map(|&v| if v > threshold { 1.0 } else { 0.0 })
            .collect();
        let rg = self.rg(x);
        Ok(self.push(r, c, out, Op::StraightThrough(x), rg))
    }

    /// Reverse pass from a `[1 x 1]` output.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::arg(format!(
                "backward needs a scalar, got {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let (rows, cols) = (node.rows, node.cols);
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.rg(v) {
                return;
            }
            let len = self.value(v).len();
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (n, k) = self.shape(*a);
                let m = self.shape(*b).1;
                let (av, bv) = (self.value(*a), self.value(*b));
                // dA = G * B^T, dB = A^T * G
                acc(*a, &mut |ga| gemm((n, m, k), g, (m, 1), bv, (1, m), 1.0, ga));
                acc(*b, &mut |gb| gemm((k, n, m), av, (1, k), g, (m, 1), 1.0, gb));
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(o, &d)| *o += d));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(o, &d)| *o += d));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(o, &d)| *o += d));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(o, &d)| *o -= d));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, &mut |ga| {
                    for ((o, &d), &y) in ga.iter_mut().zip(g).zip(bv) {
                        *o += d * y;
                    }
                });
                acc(*b, &mut |gb| {
                    for ((o, &d), &x) in gb.iter_mut().zip(g).zip(av) {
                        *o += d * x;
                    }
                });
            }
            Op::AddRow(x, row) => {
                acc(*x, &mut |gx| gx.iter_mut().zip(g).for_each(|(o, &d)| *o += d));
                acc(*row, &mut |gr| {
                    for r in g.chunks(cols.max(1)) {
                        gr.iter_mut().zip(r).for_each(|(o, &d)| *o += d);
                    }
                });
            }
            Op::MulCol(x, col) => {
                let (xv, wv) = (self.value(*x), self.value(*col));
                acc(*x, &mut |gx| {
                    for i in 0..rows {
                        for j in 0..cols {
                            gx[i * cols + j] += g[i * cols + j] * wv[i];
                        }
                    }
                });
                acc(*col, &mut |gw| {
                    for i in 0..rows {
                        let mut s = 0.0;
                        for j in 0..cols {
                            s += g[i * cols + j] * xv[i * cols + j];
                        }
                        gw[i] += s;
                    }
                });
            }
            Op::ScaleBy(x, s) => {
                let k = self.scalar(*s);
                let xv = self.value(*x);
                acc(*x, &mut |gx| gx.iter_mut().zip(g).for_each(|(o, &d)| *o += d * k));
                acc(*s, &mut |gs| gs[0] += g.iter().zip(xv).map(|(&d, &v)| d * v).sum::<f64>());
            }
            Op::Scale(x, k) => {
                acc(*x, &mut |gx| gx.iter_mut().zip(g).for_each(|(o, &d)| *o += d * k));
            }
            Op::AddScalar(x) | Op::StraightThrough(x) => {
                acc(*x, &mut |gx| gx.iter_mut().zip(g).for_each(|(o, &d)| *o += d));
            }
            Op::SumRows(x) | Op::MeanRows(x) => {
                let n = self.shape(*x).0;
                let k = if matches!(node.op, Op::MeanRows(_)) {
                    1.0 / n as f64
                } else {
                    1.0
                };
                acc(*x, &mut |gx| {
                    for r in gx.chunks_mut(cols.max(1)) {
                        r.iter_mut().zip(g).for_each(|(o, &d)| *o += d * k);
                    }
                });
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                acc(*x, &mut |gx| {
                    for ((o, &d), &v) in gx.iter_mut().zip(g).zip(xv) {
                        if v > 0.0 {
                            *o += d;
                        }
                    }
                });
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                acc(*x, &mut |gx| {
                    for ((o, &d), &s) in gx.iter_mut().zip(g).zip(y) {
                        *o += d * s * (1.0 - s);
                    }
                });
            }
            Op::Abs(x) => {
                let xv = self.value(*x);
                acc(*x, &mut |gx| {
                    for ((o, &d), &v) in gx.iter_mut().zip(g).zip(xv) {
                        *o += d * sign(v);
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let c = self.shape(p).1;
                    acc(p, &mut |gp| {
                        for i in 0..rows {
                            for j in 0..c {
                                gp[i * c + j] += g[i * cols + offset + j];
                            }
                        }
                    });
                    offset += c;
                }
            }
            Op::GatherRows(x, index) => {
                acc(*x, &mut |gx| {
                    for (k, &i) in index.iter().enumerate() {
                        for j in 0..cols {
                            gx[i * cols + j] += g[k * cols + j];
                        }
                    }
                });
            }
            Op::ScatterAddRows(x, index) => {
                acc(*x, &mut |gx| {
                    for (k, &i) in index.iter().enumerate() {
                        for j in 0..cols {
                            gx[k * cols + j] += g[i * cols + j];
                        }
                    }
                });
            }
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let (n, c) = self.shape(*logits);
                let k = g[0] / n as f64;
                acc(*logits, &mut |gl| {
                    for (i, &t) in targets.iter().enumerate() {
                        for j in 0..c {
                            let ind = if j == t { 1.0 } else { 0.0 };
                            gl[i * c + j] += k * (probs[i * c + j] - ind);
                        }
                    }
                });
            }
            Op::L1(x) => {
                let xv = self.value(*x);
                acc(*x, &mut |gx| {
                    for (o, &v) in gx.iter_mut().zip(xv) {
                        *o += g[0] * sign(v);
                    }
                });
            }
        }
    }
}
