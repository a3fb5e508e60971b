//! Define-by-run reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation in execution order; [`Var`] is a handle
//! to a recorded node. [`Tape::backward`] walks the tape once in reverse and
//! returns the gradient of a scalar loss with respect to every node.
//!
//! Sparsity is never materialised: graph aggregations are expressed with
//! [`Tape::gather`] and [`Tape::segment_mean`] over index lists.
//!
//! All reductions run sequentially in index order, so the forward and backward
//! passes are bit-reproducible for identical inputs.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Concat(Vec<Var>),
    Relu(Var),
    Sigmoid(Var),
    Square(Var),
    Sqrt(Var),
    Scale(Var, T),
    Mean(Var),
    RowMean(Var),
    Broadcast(Var),
    Gather(Var, Arc<[usize]>),
    SegmentMean {
        src: Var,
        ids: Arc<[usize]>,
        inv_counts: Vec<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
}

/// Ordered record of operations; recording order is a topological order.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

fn shape_err(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> Error {
    Error::Shape { op, lhs, rhs }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input (parameter or constant). Gradients are computed for
    /// every leaf; callers ignore the ones they do not need.
    pub fn leaf(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    fn zip_same(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err(name, va.shape(), vb.shape()));
        }
        let data = va
            .as_slice()
            .iter()
            .zip(vb.as_slice())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let out = Matrix::from_vec(va.rows(), va.cols(), data)?;
        Ok(self.push(out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// `a + 1ᵀ bias` for a `1 × cols` row vector.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(bias));
        if vb.rows() != 1 || vb.cols() != va.cols() {
            return Err(shape_err("add_bias", va.shape(), vb.shape()));
        }
        let mut out = va.clone();
        for r in 0..out.rows() {
            for (x, &b) in out.row_mut(r).iter_mut().zip(vb.as_slice()) {
                *x = *x + b;
            }
        }
        Ok(self.push(out, Op::AddBias(a, bias)))
    }

    /// Scales each row of `a` by the matching entry of the column vector `s`.
    pub fn mul_col(&mut self, a: Var, s: Var) -> Result<Var> {
        let (va, vs) = (self.value(a), self.value(s));
        if vs.cols() != 1 || vs.rows() != va.rows() {
            return Err(shape_err("mul_col", va.shape(), vs.shape()));
        }
        let mut out = va.clone();
        for r in 0..out.rows() {
            let k = vs.get(r, 0);
            out.row_mut(r).iter_mut().for_each(|x| *x = *x * k);
        }
        Ok(self.push(out, Op::MulCol(a, s)))
    }

    /// Horizontal concatenation; all parts must share a row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::InvalidArgument("concat_cols of nothing".into()));
        };
        let rows = self.value(first).rows();
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(shape_err(
                    "concat_cols",
                    self.value(first).shape(),
                    self.value(p).shape(),
                ));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let dst = out.row_mut(r);
            let mut off = 0;
            for &p in parts {
                let src = self.nodes[p.0].value.row(r);
                dst[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(out, Op::Concat(parts.to_vec())))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(T::zero()));
        self.push(out, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * x);
        self.push(out, Op::Square(a))
    }

    /// Elementwise square root. The derivative at 0 is taken as 0.
    pub fn sqrt(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.sqrt());
        self.push(out, Op::Sqrt(a))
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let out = self.value(a).map(|x| x * k);
        self.push(out, Op::Scale(a, k))
    }

    /// Mean of all entries, as a `1 × 1` node.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        if va.is_empty() {
            return Err(Error::InvalidArgument("mean of an empty matrix".into()));
        }
        let n = T::lit(va.len() as f64);
        let s = va.as_slice().iter().fold(T::zero(), |acc, &x| acc + x);
        Ok(self.push(Matrix::scalar(s / n), Op::Mean(a)))
    }

    /// Mean of each row, as an `rows × 1` column.
    pub fn row_mean(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        if va.cols() == 0 {
            return Err(Error::InvalidArgument("row_mean over zero columns".into()));
        }
        let n = T::lit(va.cols() as f64);
        let data = (0..va.rows())
            .map(|r| va.row(r).iter().fold(T::zero(), |acc, &x| acc + x) / n)
            .collect();
        let out = Matrix::from_vec(va.rows(), 1, data)?;
        Ok(self.push(out, Op::RowMean(a)))
    }

    /// Repeats a `1 × 1` node into a `rows × cols` matrix.
    pub fn broadcast(&mut self, s: Var, rows: usize, cols: usize) -> Result<Var> {
        let vs = self.value(s);
        if vs.shape() != (1, 1) {
            return Err(shape_err("broadcast", vs.shape(), (rows, cols)));
        }
        let out = Matrix::filled(rows, cols, vs.get(0, 0));
        Ok(self.push(out, Op::Broadcast(s)))
    }

    /// `out[i] = a[index[i]]` row-wise.
    pub fn gather(&mut self, a: Var, index: &Arc<[usize]>) -> Result<Var> {
        let va = self.value(a);
        if let Some(&bad) = index.iter().find(|&&i| i >= va.rows()) {
            return Err(Error::InvalidArgument(format!(
                "gather index {bad} out of range for {} rows",
                va.rows()
            )));
        }
        let cols = va.cols();
        let mut out = Matrix::zeros(index.len(), cols);
        for (r, &i) in index.iter().enumerate() {
            out.row_mut(r).copy_from_slice(va.row(i));
        }
        Ok(self.push(out, Op::Gather(a, Arc::clone(index))))
    }

    /// Mean of the rows of `values` grouped by `segment_ids`; segment `s`
    /// receives the mean of every row `r` with `segment_ids[r] == s`. Empty
    /// segments produce zero rows (and pass back zero gradient).
    pub fn segment_mean(&mut self, values: Var, segment_ids: &Arc<[usize]>, n_segments: usize) -> Result<Var> {
        let vv = self.value(values);
        if segment_ids.len() != vv.rows() {
            return Err(shape_err("segment_mean", vv.shape(), (segment_ids.len(), 1)));
        }
        if let Some(&bad) = segment_ids.iter().find(|&&s| s >= n_segments) {
            return Err(Error::InvalidArgument(format!(
                "segment id {bad} out of range for {n_segments} segments"
            )));
        }
        let cols = vv.cols();
        let mut counts = vec![0usize; n_segments];
        for &s in segment_ids.iter() {
            counts[s] += 1;
        }
        let inv_counts: Vec<T> = counts
            .iter()
            .map(|&c| if c == 0 { T::zero() } else { T::one() / T::lit(c as f64) })
            .collect();
        let mut out = Matrix::zeros(n_segments, cols);
        for (r, &s) in segment_ids.iter().enumerate() {
            let src = vv.row(r);
            for (o, &x) in out.row_mut(s).iter_mut().zip(src) {
                *o = *o + x;
            }
        }
        for (s, &k) in inv_counts.iter().enumerate() {
            out.row_mut(s).iter_mut().for_each(|x| *x = *x * k);
        }
        Ok(self.push(
            out,
            Op::SegmentMean {
                src: values,
                ids: Arc::clone(segment_ids),
                inv_counts,
            },
        ))
    }

    /// Reverse pass from a `1 × 1` loss node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(Error::InvalidArgument(format!(
                "backward needs a scalar loss, got shape {shape:?}"
            )));
        }
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(T::one()));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            self.propagate(node, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node<T>, g: &Matrix<T>, grads: &mut [Option<Matrix<T>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                // dA = dC · Bᵀ
                let ga = slot(grads, *a, m, k);
                T::gemm(
                    m,
                    n,
                    k,
                    g.as_slice(),
                    (n as isize, 1),
                    vb.as_slice(),
                    (1, n as isize),
                    ga.as_mut_slice(),
                    true,
                );
                // dB = Aᵀ · dC
                let gb = slot(grads, *b, k, n);
                T::gemm(
                    k,
                    m,
                    n,
                    va.as_slice(),
                    (1, k as isize),
                    g.as_slice(),
                    (n as isize, 1),
                    gb.as_mut_slice(),
                    true,
                );
            }
            Op::Add(a, b) => {
                add_into(slot_like(grads, *a, g), g, T::one());
                add_into(slot_like(grads, *b, g), g, T::one());
            }
            Op::Sub(a, b) => {
                add_into(slot_like(grads, *a, g), g, T::one());
                add_into(slot_like(grads, *b, g), g, -T::one());
            }
            Op::AddBias(a, bias) => {
                add_into(slot_like(grads, *a, g), g, T::one());
                let gb = slot(grads, *bias, 1, g.cols());
                for r in 0..g.rows() {
                    for (o, &x) in gb.as_mut_slice().iter_mut().zip(g.row(r)) {
                        *o = *o + x;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let ga = slot_like(grads, *a, g);
                for ((o, &d), &y) in ga.as_mut_slice().iter_mut().zip(g.as_slice()).zip(vb.as_slice()) {
                    *o = *o + d * y;
                }
                let gb = slot_like(grads, *b, g);
                for ((o, &d), &x) in gb.as_mut_slice().iter_mut().zip(g.as_slice()).zip(va.as_slice()) {
                    *o = *o + d * x;
                }
            }
            Op::MulCol(a, s) => {
                let (va, vs) = (val(*a), val(*s));
                let ga = slot_like(grads, *a, g);
                for r in 0..g.rows() {
                    let k = vs.get(r, 0);
                    for (o, &d) in ga.row_mut(r).iter_mut().zip(g.row(r)) {
                        *o = *o + d * k;
                    }
                }
                let gs = slot(grads, *s, vs.rows(), 1);
                for r in 0..g.rows() {
                    let dot = g
                        .row(r)
                        .iter()
                        .zip(va.row(r))
                        .fold(T::zero(), |acc, (&d, &x)| acc + d * x);
                    let cur = gs.get(r, 0);
                    gs.set(r, 0, cur + dot);
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let c = val(p).cols();
                    let gp = slot(grads, p, g.rows(), c);
                    for r in 0..g.rows() {
                        for (o, &d) in gp.row_mut(r).iter_mut().zip(&g.row(r)[off..off + c]) {
                            *o = *o + d;
                        }
                    }
                    off += c;
                }
            }
            Op::Relu(a) => {
                let va = val(*a);
                let ga = slot_like(grads, *a, g);
                for ((o, &d), &x) in ga.as_mut_slice().iter_mut().zip(g.as_slice()).zip(va.as_slice()) {
                    if x > T::zero() {
                        *o = *o + d;
                    }
                }
            }
            Op::Sigmoid(a) => {
                let ga = slot_like(grads, *a, g);
                for ((o, &d), &y) in ga
                    .as_mut_slice()
                    .iter_mut()
                    .zip(g.as_slice())
                    .zip(node.value.as_slice())
                {
                    *o = *o + d * y * (T::one() - y);
                }
            }
            Op::Square(a) => {
                let va = val(*a);
                let two = T::lit(2.0);
                let ga = slot_like(grads, *a, g);
                for ((o, &d), &x) in ga.as_mut_slice().iter_mut().zip(g.as_slice()).zip(va.as_slice()) {
                    *o = *o + two * x * d;
                }
            }
            Op::Sqrt(a) => {
                let two = T::lit(2.0);
                let ga = slot_like(grads, *a, g);
                for ((o, &d), &y) in ga
                    .as_mut_slice()
                    .iter_mut()
                    .zip(g.as_slice())
                    .zip(node.value.as_slice())
                {
                    if y > T::zero() {
                        *o = *o + d / (two * y);
                    }
                }
            }
            Op::Scale(a, k) => add_into(slot_like(grads, *a, g), g, *k),
            Op::Mean(a) => {
                let va = val(*a);
                let share = g.get(0, 0) / T::lit(va.len() as f64);
                let ga = slot(grads, *a, va.rows(), va.cols());
                ga.as_mut_slice().iter_mut().for_each(|o| *o = *o + share);
            }
            Op::RowMean(a) => {
                let va = val(*a);
                let n = T::lit(va.cols() as f64);
                let ga = slot(grads, *a, va.rows(), va.cols());
                for r in 0..va.rows() {
                    let share = g.get(r, 0) / n;
                    ga.row_mut(r).iter_mut().for_each(|o| *o = *o + share);
                }
            }
            Op::Broadcast(s) => {
                let total = g.as_slice().iter().fold(T::zero(), |acc, &d| acc + d);
                let gs = slot(grads, *s, 1, 1);
                gs.set(0, 0, gs.get(0, 0) + total);
            }
            Op::Gather(a, index) => {
                let va = val(*a);
                let ga = slot(grads, *a, va.rows(), va.cols());
                for (r, &i) in index.iter().enumerate() {
                    for (o, &d) in ga.row_mut(i).iter_mut().zip(g.row(r)) {
                        *o = *o + d;
                    }
                }
            }
            Op::SegmentMean { src, ids, inv_counts } => {
                let vs = val(*src);
                let gs = slot(grads, *src, vs.rows(), vs.cols());
                for (r, &s) in ids.iter().enumerate() {
                    let k = inv_counts[s];
                    for (o, &d) in gs.row_mut(r).iter_mut().zip(g.row(s)) {
                        *o = *o + d * k;
                    }
                }
            }
        }
    }
}

fn slot<T: Scalar>(grads: &mut [Option<Matrix<T>>], v: Var, rows: usize, cols: usize) -> &mut Matrix<T> {
    grads[v.0].get_or_insert_with(|| Matrix::zeros(rows, cols))
}

fn slot_like<'a, T: Scalar>(grads: &'a mut [Option<Matrix<T>>], v: Var, like: &Matrix<T>) -> &'a mut Matrix<T> {
    slot(grads, v, like.rows(), like.cols())
}

fn add_into<T: Scalar>(dst: &mut Matrix<T>, src: &Matrix<T>, k: T) {
    for (o, &d) in dst.as_mut_slice().iter_mut().zip(src.as_slice()) {
        *o = *o + k * d;
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Result of [`Tape::backward`]: one gradient per recorded node.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Matrix<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `v`; `None` when `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Matrix<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, materialising zeros for unused nodes.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Matrix<T> {
        self.get(v).cloned().unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}
