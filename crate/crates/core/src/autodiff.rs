//! Matrix-valued reverse-mode differentiation.
//!
//! A [`Tape`] records every operation eagerly (values are computed as nodes
//! are pushed) and [`Tape::backward`] walks the record in reverse. Model
//! parameters live in a [`ParamStore`] and enter a graph as leaves through
//! [`Graph::param`], which binds each parameter at most once per graph so
//! weights shared across time steps accumulate their gradient correctly.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::numerics::Mat;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    AddScalar(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    MulConst(Var, Mat),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Relu(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    SoftmaxRows(Var),
    Transpose(Var),
    SliceCols(Var, usize, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SelectRows(Var, Vec<usize>),
    Diag(Var),
    Sum(Var),
    SumCols(Var),
}

struct Node {
    value: Mat,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node of a tape.
pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.grads[v.0].as_ref()
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

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Constant or parameter input.
    pub fn leaf(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a * b^T`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_t(self.value(b));
        self.push(v, Op::MatMulT(a, b))
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

    /// Adds a `1×m` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = broadcast_rows(self.value(a), self.value(row), |x, y| x + y);
        self.push(v, Op::AddRow(a, row))
    }

    /// Multiplies every row of `a` element-wise by a `1×m` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let v = broadcast_rows(self.value(a), self.value(row), |x, y| x * y);
        self.push(v, Op::MulRow(a, row))
    }

    /// Adds a `1×1` scalar node to every entry of `a`.
    pub fn add_scalar(&mut self, a: Var, s: Var) -> Var {
        let sv = self.value(s);
        assert_eq!(sv.shape(), (1, 1), "add_scalar expects a 1x1 node");
        let offset = sv.get(0, 0);
        let v = self.value(a).map(|x| x + offset);
        self.push(v, Op::AddScalar(a, s))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        self.push(v, Op::Scale(a, s))
    }

    /// Adds a constant matrix; the gradient passes through unchanged.
    pub fn offset(&mut self, a: Var, c: &Mat) -> Var {
        let v = self.value(a).zip_map(c, |x, y| x + y);
        self.push(v, Op::Offset(a))
    }

    /// Element-wise product with a constant matrix.
    pub fn mul_const(&mut self, a: Var, c: Mat) -> Var {
        let v = self.value(a).zip_map(&c, |x, y| x * y);
        self.push(v, Op::MulConst(a, c))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    /// Clamp with zero gradient outside `[lo, hi]`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(v, Op::Clamp(a, lo, hi))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let v = softmax_rows(self.value(a));
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let m = self.value(a);
        assert!(start < end && end <= m.cols(), "slice_cols out of range");
        let mut out = Vec::with_capacity(m.rows() * (end - start));
        for r in 0..m.rows() {
            out.extend_from_slice(&m.row(r)[start..end]);
        }
        let v = Mat::raw(m.rows(), end - start, out);
        self.push(v, Op::SliceCols(a, start, end))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                let m = self.value(*p);
                assert_eq!(m.rows(), rows, "concat_cols row mismatch");
                out.extend_from_slice(m.row(r));
            }
        }
        let v = Mat::raw(rows, cols, out);
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut out = Vec::new();
        let mut rows = 0;
        for p in parts {
            let m = self.value(*p);
            assert_eq!(m.cols(), cols, "concat_rows column mismatch");
            out.extend_from_slice(m.as_slice());
            rows += m.rows();
        }
        let v = Mat::raw(rows, cols, out);
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    /// Gathers rows by index (embedding lookup).
    pub fn select_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let m = self.value(a);
        let mut out = Vec::with_capacity(idx.len() * m.cols());
        for &i in idx {
            out.extend_from_slice(m.row(i));
        }
        let v = Mat::raw(idx.len(), m.cols(), out);
        self.push(v, Op::SelectRows(a, idx.to_vec()))
    }

    /// `1×n` row to an `n×n` diagonal matrix.
    pub fn diag(&mut self, a: Var) -> Var {
        let m = self.value(a);
        assert_eq!(m.rows(), 1, "diag expects a row");
        let v = Mat::from_diag(m.as_slice());
        self.push(v, Op::Diag(a))
    }

    /// Sum of all entries as a `1×1` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let v = Mat::raw(1, 1, vec![self.value(a).sum()]);
        self.push(v, Op::Sum(a))
    }

    /// Row sums as an `n×1` column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let v = Mat::raw(m.rows(), 1, (0..m.rows()).map(|r| m.row(r).iter().sum()).collect());
        self.push(v, Op::SumCols(a))
    }

    /// Reverse pass from a `1×1` output.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.value(output).shape(), (1, 1), "backward expects a scalar output");
        let mut grads: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Mat::filled(1, 1, 1.0));
        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, op: &Op, out: &Mat, g: &Mat, grads: &mut [Option<Mat>]) {
        let val = |v: &Var| &self.nodes[v.0].value;
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                // C = A B: dA = dC B^T, dB = A^T dC.
                accumulate(grads, *a, g.matmul_t(val(b)));
                accumulate(grads, *b, val(a).transpose().matmul(g));
            }
            Op::MatMulT(a, b) => {
                // C = A B^T: dA = dC B, dB = dC^T A.
                accumulate(grads, *a, g.matmul(val(b)));
                accumulate(grads, *b, g.transpose().matmul(val(a)));
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                accumulate(grads, *a, g.zip_map(val(b), |x, y| x * y));
                accumulate(grads, *b, g.zip_map(val(a), |x, y| x * y));
            }
            Op::AddRow(a, row) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *row, column_sums(g));
            }
            Op::MulRow(a, row) => {
                accumulate(grads, *a, broadcast_rows(g, val(row), |x, y| x * y));
                accumulate(grads, *row, column_sums(&g.zip_map(val(a), |x, y| x * y)));
            }
            Op::AddScalar(a, s) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *s, Mat::filled(1, 1, g.sum()));
            }
            Op::Scale(a, s) => accumulate(grads, *a, g.scale(*s)),
            Op::Offset(a) => accumulate(grads, *a, g.clone()),
            Op::MulConst(a, c) => accumulate(grads, *a, g.zip_map(c, |x, y| x * y)),
            Op::Tanh(a) => accumulate(grads, *a, g.zip_map(out, |x, y| x * (1.0 - y * y))),
            Op::Sigmoid(a) => accumulate(grads, *a, g.zip_map(out, |x, y| x * y * (1.0 - y))),
            Op::Exp(a) => accumulate(grads, *a, g.zip_map(out, |x, y| x * y)),
            Op::Relu(a) => {
                accumulate(grads, *a, g.zip_map(val(a), |x, y| if y > 0.0 { x } else { 0.0 }))
            }
            Op::Square(a) => accumulate(grads, *a, g.zip_map(val(a), |x, y| 2.0 * x * y)),
            Op::Clamp(a, lo, hi) => accumulate(
                grads,
                *a,
                g.zip_map(val(a), |x, y| if y > *lo && y < *hi { x } else { 0.0 }),
            ),
            Op::SoftmaxRows(a) => {
                let mut d = Mat::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let (y, gy) = (out.row(r), g.row(r));
                    let inner: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                    for (c, dv) in d.row_mut(r).iter_mut().enumerate() {
                        *dv = y[c] * (gy[c] - inner);
                    }
                }
                accumulate(grads, *a, d);
            }
            Op::Transpose(a) => accumulate(grads, *a, g.transpose()),
            Op::SliceCols(a, start, end) => {
                let src = val(a);
                let mut d = Mat::zeros(src.rows(), src.cols());
                for r in 0..src.rows() {
                    d.row_mut(r)[*start..*end].copy_from_slice(g.row(r));
                }
                accumulate(grads, *a, d);
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for p in parts {
                    let cols = val(p).cols();
                    let mut d = Mat::zeros(g.rows(), cols);
                    for r in 0..g.rows() {
                        d.row_mut(r).copy_from_slice(&g.row(r)[start..start + cols]);
                    }
                    accumulate(grads, *p, d);
                    start += cols;
                }
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for p in parts {
                    let (rows, cols) = val(p).shape();
                    let d = Mat::raw(
                        rows,
                        cols,
                        g.as_slice()[start * cols..(start + rows) * cols].to_vec(),
                    );
                    accumulate(grads, *p, d);
                    start += rows;
                }
            }
            Op::SelectRows(a, idx) => {
                let src = val(a);
                let mut d = Mat::zeros(src.rows(), src.cols());
                for (r, &i) in idx.iter().enumerate() {
                    for (dv, gv) in d.row_mut(i).iter_mut().zip(g.row(r)) {
                        *dv += gv;
                    }
                }
                accumulate(grads, *a, d);
            }
            Op::Diag(a) => {
                let n = g.rows();
                accumulate(grads, *a, Mat::raw(1, n, (0..n).map(|i| g.get(i, i)).collect()));
            }
            Op::Sum(a) => {
                let (r, c) = val(a).shape();
                accumulate(grads, *a, Mat::filled(r, c, g.get(0, 0)));
            }
            Op::SumCols(a) => {
                let src = val(a);
                let mut d = Mat::zeros(src.rows(), src.cols());
                for r in 0..src.rows() {
                    d.row_mut(r).iter_mut().for_each(|v| *v = g.get(r, 0));
                }
                accumulate(grads, *a, d);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Mat>], v: Var, d: Mat) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&d),
        slot @ None => *slot = Some(d),
    }
}

fn broadcast_rows(a: &Mat, row: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
    assert_eq!(row.rows(), 1, "broadcast operand must be a single row");
    assert_eq!(a.cols(), row.cols(), "broadcast column mismatch");
    let mut out = Vec::with_capacity(a.rows() * a.cols());
    for r in 0..a.rows() {
        out.extend(a.row(r).iter().zip(row.as_slice()).map(|(x, y)| f(*x, *y)));
    }
    Mat::raw(a.rows(), a.cols(), out)
}

fn column_sums(m: &Mat) -> Mat {
    let mut out = vec![0.0; m.cols()];
    for r in 0..m.rows() {
        for (o, v) in out.iter_mut().zip(m.row(r)) {
            *o += v;
        }
    }
    Mat::raw(1, m.cols(), out)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows(m: &Mat) -> Mat {
    let mut out = m.clone();
    for r in 0..m.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    out
}

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedParam {
    pub name: String,
    pub value: Mat,
}

/// Ordered, named collection of trainable matrices.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamStore {
    entries: Vec<NamedParam>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        self.entries.push(NamedParam { name: name.into(), value });
        ParamId(self.entries.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.entries[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Mat)> {
        self.entries.iter().enumerate().map(|(i, e)| (ParamId(i), e.name.as_str(), &e.value))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|e| e.value.as_slice().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|e| e.value.is_finite())
    }
}

/// A tape plus lazily bound parameter leaves.
pub struct Graph<'s> {
    tape: Tape,
    store: &'s ParamStore,
    bound: Vec<Option<Var>>,
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Self { tape: Tape::new(), store, bound: vec![None; store.len()] }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    /// Leaf for a stored parameter, created on first use.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.tape.leaf(self.store.get(id).clone());
        self.bound[id.0] = Some(v);
        v
    }

    /// Gradient of `output` for every stored parameter; unused ones are zero.
    pub fn param_grads(&self, output: Var) -> Vec<Mat> {
        let grads = self.tape.backward(output);
        self.store
            .iter()
            .map(|(id, _, value)| {
                self.bound[id.0]
                    .and_then(|v| grads.get(v).cloned())
                    .unwrap_or_else(|| Mat::zeros(value.rows(), value.cols()))
            })
            .collect()
    }
}

impl Deref for Graph<'_> {
    type Target = Tape;
    fn deref(&self) -> &Tape {
        &self.tape
    }
}

impl DerefMut for Graph<'_> {
    fn deref_mut(&mut self) -> &mut Tape {
        &mut self.tape
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, RngStream, FD_EPS};

    type Build = dyn Fn(&mut Tape, &[Var]) -> Var;

    /// Scalarizes `build` with fixed random weights and compares every input
    /// gradient against central differences.
    fn check(shapes: &[(usize, usize)], build: &Build) {
        let mut rng = RngStream::new(17);
        let inputs: Vec<Mat> = shapes
            .iter()
            .map(|&(r, c)| Mat::raw(r, c, (0..r * c).map(|_| rng.next_normal()).collect()))
            .collect();
        let eval = |inputs: &[Mat]| -> (Tape, Vec<Var>, Var) {
            let mut t = Tape::new();
            let leaves: Vec<Var> = inputs.iter().map(|m| t.leaf(m.clone())).collect();
            let out = build(&mut t, &leaves);
            (t, leaves, out)
        };
        let (probe, _, out) = eval(&inputs);
        let (r, c) = probe.value(out).shape();
        let weights = Mat::raw(r, c, (0..r * c).map(|_| rng.next_normal()).collect());
        let scalar = |inputs: &[Mat]| -> (Tape, Vec<Var>, Var) {
            let (mut t, leaves, out) = eval(inputs);
            let w = t.leaf(weights.clone());
            let prod = t.mul(out, w);
            let s = t.sum(prod);
            (t, leaves, s)
        };
        let (tape, leaves, s) = scalar(&inputs);
        let grads = tape.backward(s);
        for (k, leaf) in leaves.iter().enumerate() {
            let analytic = grads.get(*leaf).cloned().unwrap_or_else(|| Mat::zeros(shapes[k].0, shapes[k].1));
            let numeric = finite_diff_grad(
                |x| {
                    let mut perturbed = inputs.clone();
                    perturbed[k] = Mat::raw(shapes[k].0, shapes[k].1, x.to_vec());
                    let (t, _, s) = scalar(&perturbed);
                    t.value(s).get(0, 0)
                },
                inputs[k].as_slice(),
                FD_EPS,
            );
            for (a, n) in analytic.as_slice().iter().zip(&numeric) {
                assert!((a - n).abs() <= 1e-6 * (1.0 + a.abs()), "input {k}: analytic {a}, numeric {n}");
            }
        }
    }

    #[test]
    fn binary_ops() {
        check(&[(3, 4), (4, 2)], &|t, v| t.matmul(v[0], v[1]));
        check(&[(3, 4), (2, 4)], &|t, v| t.matmul_t(v[0], v[1]));
        check(&[(2, 3), (2, 3)], &|t, v| t.add(v[0], v[1]));
        check(&[(2, 3), (2, 3)], &|t, v| t.sub(v[0], v[1]));
        check(&[(2, 3), (2, 3)], &|t, v| t.mul(v[0], v[1]));
        check(&[(3, 4), (1, 4)], &|t, v| t.add_row(v[0], v[1]));
        check(&[(3, 4), (1, 4)], &|t, v| t.mul_row(v[0], v[1]));
        check(&[(3, 1), (1, 1)], &|t, v| t.add_scalar(v[0], v[1]));
    }

    #[test]
    fn unary_ops() {
        check(&[(2, 3)], &|t, v| t.scale(v[0], -1.7));
        check(&[(2, 3)], &|t, v| t.offset(v[0], &Mat::filled(2, 3, 0.4)));
        check(&[(2, 3)], &|t, v| t.mul_const(v[0], Mat::filled(2, 3, 1.3)));
        check(&[(2, 3)], &|t, v| t.tanh(v[0]));
        check(&[(2, 3)], &|t, v| t.sigmoid(v[0]));
        check(&[(2, 3)], &|t, v| t.exp(v[0]));
        check(&[(2, 3)], &|t, v| t.relu(v[0]));
        check(&[(2, 3)], &|t, v| t.square(v[0]));
        check(&[(2, 3)], &|t, v| t.clamp(v[0], -0.5, 0.5));
        check(&[(3, 4)], &|t, v| t.softmax_rows(v[0]));
        check(&[(2, 3)], &|t, v| t.transpose(v[0]));
        check(&[(2, 3)], &|t, v| t.sum(v[0]));
        check(&[(2, 3)], &|t, v| t.sum_cols(v[0]));
        check(&[(1, 3)], &|t, v| t.diag(v[0]));
    }

    #[test]
    fn structural_ops() {
        check(&[(2, 5)], &|t, v| t.slice_cols(v[0], 1, 4));
        check(&[(2, 2), (2, 3)], &|t, v| t.concat_cols(&[v[0], v[1]]));
        check(&[(1, 3), (2, 3)], &|t, v| t.concat_rows(&[v[0], v[1]]));
        check(&[(4, 2)], &|t, v| t.select_rows(v[0], &[2, 0, 2]));
    }

    #[test]
    fn shared_subexpressions_accumulate() {
        check(&[(2, 2)], &|t, v| {
            let a = t.tanh(v[0]);
            let b = t.mul(a, v[0]);
            t.matmul(b, a)
        });
    }

    #[test]
    fn graph_binds_each_parameter_once() {
        let mut store = ParamStore::new();
        let w = store.add("w", Mat::filled(1, 1, 3.0));
        let unused = store.add("unused", Mat::filled(2, 2, 1.0));
        let mut g = Graph::new(&store);
        let a = g.param(w);
        let b = g.param(w);
        assert_eq!(a, b);
        let sq = g.mul(a, b);
        let grads = g.param_grads(sq);
        assert_eq!(grads[w.index()].get(0, 0), 6.0);
        assert_eq!(grads[unused.index()], Mat::zeros(2, 2));
        assert_eq!(store.find("unused"), Some(unused));
        assert_eq!(store.numel(), 5);
    }
}
