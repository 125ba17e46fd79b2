//! Tensor-level reverse-mode differentiation.
//!
//! Every operation appends one node to the [`Tape`]; nodes only reference
//! earlier nodes, so the recording order is a topological order and the
//! backward pass is a single sweep over the nodes in reverse. Adjoints of a
//! value consumed several times are summed.

use std::sync::Arc;

use super::tensor::{check_finite, softmax_into, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Constant sparse matrix, stored as per-row `(column, value)` lists.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRows<T> {
    pub cols: usize,
    pub rows: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> SparseRows<T> {
    pub fn new(cols: usize, rows: Vec<Vec<(usize, T)>>) -> Self {
        SparseRows { cols, rows }
    }

    pub fn is_zero(&self) -> bool {
        self.rows.iter().all(Vec::is_empty)
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        self.rows
            .iter()
            .map(|r| {
                let mut dense = vec![T::zero(); self.cols];
                for &(c, v) in r {
                    dense[c] = dense[c] + v;
                }
                dense
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Linear(Var, Var),
    MatMul(Var, Var),
    SparseMatMul(Arc<SparseRows<T>>, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    SliceRows(Var, usize),
    ConcatRows(Vec<Var>),
    ConcatLast(Var, Var),
    GatherRows(Var, Arc<Vec<usize>>),
    MatVec(Var, Var),
    VecMat(Var, Var),
    SumRows(Var),
    MeanRows(Var),
    Sum(Var),
    Mean(Var),
    Nll(Var, usize),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records a computation for one backward pass. Single owner, not `Sync`.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    clamped: usize,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Adjoint of `var`, or `None` when the loss does not depend on it.
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

const NLL_FLOOR: f64 = 1e-12;

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            clamped: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of times a probability was clamped in [`Tape::nll`].
    pub fn clamp_count(&self) -> usize {
        self.clamped
    }

    /// A differentiable input.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, true)
    }

    /// A constant input; no adjoint is accumulated for it.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, false)
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    fn push_leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        check_finite(value.data())?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn matrix_dims(&self, var: Var, what: &str) -> Result<(usize, usize)> {
        let t = self.value(var);
        match t.rank() {
            1 | 2 => Ok(t.as_matrix_dims()),
            r => Err(Error::dim(format!("{what}: expected rank 1 or 2, got rank {r}"))),
        }
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    /// `x · wᵀ` for `x` of shape `[d_in]` or `[n, d_in]` and `w` of shape
    /// `[d_out, d_in]`.
    pub fn linear(&mut self, x: Var, w: Var) -> Result<Var> {
        let (n, d_in) = self.matrix_dims(x, "linear input")?;
        let wt = self.value(w);
        if wt.rank() != 2 || wt.shape()[1] != d_in {
            return Err(Error::dim(format!(
                "linear: input width {d_in} vs weight shape {:?}",
                wt.shape()
            )));
        }
        let d_out = wt.shape()[0];
        let xd = self.value(x).data();
        let wd = wt.data();
        let mut out = vec![T::zero(); n * d_out];
        for r in 0..n {
            let xr = &xd[r * d_in..(r + 1) * d_in];
            for o in 0..d_out {
                out[r * d_out + o] = dot(xr, &wd[o * d_in..(o + 1) * d_in]);
            }
        }
        let shape = if self.value(x).rank() == 1 {
            vec![d_out]
        } else {
            vec![n, d_out]
        };
        self.push(Tensor::from_raw(shape, out), Op::Linear(x, w), &[x, w])
    }

    /// Matrix product `a · b` for `[n, k] x [k, m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.matrix_dims(a, "matmul lhs")?;
        let (k2, m) = self.matrix_dims(b, "matmul rhs")?;
        if self.value(a).rank() != 2 || self.value(b).rank() != 2 || k != k2 {
            return Err(Error::dim(format!("matmul: {:?} x {:?}", self.shape(a), self.shape(b))));
        }
        let ad = self.value(a).data();
        let bd = self.value(b).data();
        let mut out = vec![T::zero(); n * m];
        for i in 0..n {
            let row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                axpy(ad[i * k + p], &bd[p * m..(p + 1) * m], row);
            }
        }
        self.push(Tensor::from_raw(vec![n, m], out), Op::MatMul(a, b), &[a, b])
    }

    /// Constant sparse matrix times `x` (`[k, d]`).
    pub fn sparse_matmul(&mut self, a: Arc<SparseRows<T>>, x: Var) -> Result<Var> {
        let (k, d) = self.matrix_dims(x, "sparse_matmul rhs")?;
        if self.value(x).rank() != 2 || a.cols != k {
            return Err(Error::dim(format!(
                "sparse_matmul: {} columns vs rhs {:?}",
                a.cols,
                self.shape(x)
            )));
        }
        let n = a.rows.len();
        if n == 0 {
            return Err(Error::dim("sparse_matmul: zero rows"));
        }
        let xd = self.value(x).data();
        let mut out = vec![T::zero(); n * d];
        for (i, row) in a.rows.iter().enumerate() {
            let dst = &mut out[i * d..(i + 1) * d];
            for &(j, w) in row {
                axpy(w, &xd[j * d..(j + 1) * d], dst);
            }
        }
        self.push(Tensor::from_raw(vec![n, d], out), Op::SparseMatMul(a, x), &[x])
    }

    fn zip_op(&mut self, a: Var, b: Var, op: Op<T>, f: impl Fn(T, T) -> T) -> Result<Var> {
        self.same_shape(a, b, "elementwise")?;
        let va = self.value(a);
        let data = va
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::from_raw(va.shape().to_vec(), data);
        self.push(t, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Adds the vector `row` (`[d]`) to every row of `x` (`[n, d]`).
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (_, d) = self.matrix_dims(x, "add_row")?;
        if self.value(row).rank() != 1 || self.value(row).len() != d {
            return Err(Error::dim(format!(
                "add_row: {:?} + {:?}",
                self.shape(x),
                self.shape(row)
            )));
        }
        let r = self.value(row).data();
        let xv = self.value(x);
        let data = xv.data().iter().enumerate().map(|(i, &v)| v + r[i % d]).collect();
        let t = Tensor::from_raw(xv.shape().to_vec(), data);
        self.push(t, Op::AddRow(x, row), &[x, row])
    }

    pub fn scale(&mut self, x: Var, s: T) -> Result<Var> {
        let t = self.value(x).map(|v| v * s);
        self.push(t, Op::Scale(x, s), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).map(T::tanh);
        self.push(t, Op::Tanh(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).map(sigmoid);
        self.push(t, Op::Sigmoid(x), &[x])
    }

    /// Softmax along the last axis (each row of a matrix independently).
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let (n, d) = self.matrix_dims(x, "softmax")?;
        let xv = self.value(x);
        let mut out = vec![T::zero(); n * d];
        for r in 0..n {
            softmax_into(xv.row(r), &mut out[r * d..(r + 1) * d]);
        }
        let t = Tensor::from_raw(xv.shape().to_vec(), out);
        self.push(t, Op::Softmax(x), &[x])
    }

    /// Rows `start..start + len` of a matrix.
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (n, d) = self.matrix_dims(x, "slice_rows")?;
        if self.value(x).rank() != 2 || len == 0 || start + len > n {
            return Err(Error::dim(format!(
                "slice_rows {start}..{} of {:?}",
                start + len,
                self.shape(x)
            )));
        }
        let data = self.value(x).data()[start * d..(start + len) * d].to_vec();
        self.push(Tensor::from_raw(vec![len, d], data), Op::SliceRows(x, start), &[x])
    }

    /// Stacks matrices (or vectors, as single rows) vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::dim("concat_rows of nothing"));
        }
        let (_, d) = self.matrix_dims(parts[0], "concat_rows")?;
        let mut data = Vec::new();
        for &p in parts {
            let (_, dp) = self.matrix_dims(p, "concat_rows")?;
            if dp != d {
                return Err(Error::dim(format!("concat_rows: widths {d} and {dp}")));
            }
            data.extend_from_slice(self.value(p).data());
        }
        let n = data.len() / d;
        self.push(
            Tensor::from_raw(vec![n, d], data),
            Op::ConcatRows(parts.to_vec()),
            parts,
        )
    }

    /// Concatenation along the last axis; both inputs share leading dims.
    pub fn concat_last(&mut self, a: Var, b: Var) -> Result<Var> {
        let (na, da) = self.matrix_dims(a, "concat_last")?;
        let (nb, db) = self.matrix_dims(b, "concat_last")?;
        if na != nb || self.value(a).rank() != self.value(b).rank() {
            return Err(Error::dim(format!(
                "concat_last: {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(na * (da + db));
        for r in 0..na {
            data.extend_from_slice(&ad[r * da..(r + 1) * da]);
            data.extend_from_slice(&bd[r * db..(r + 1) * db]);
        }
        let shape = if self.value(a).rank() == 1 {
            vec![da + db]
        } else {
            vec![na, da + db]
        };
        self.push(Tensor::from_raw(shape, data), Op::ConcatLast(a, b), &[a, b])
    }

    /// Selects rows of `x` by index (repeats allowed).
    pub fn gather_rows(&mut self, x: Var, idx: Arc<Vec<usize>>) -> Result<Var> {
        let (n, d) = self.matrix_dims(x, "gather_rows")?;
        if self.value(x).rank() != 2 || idx.is_empty() || idx.iter().any(|&i| i >= n) {
            return Err(Error::dim(format!(
                "gather_rows: bad index set for {:?}",
                self.shape(x)
            )));
        }
        let xd = self.value(x).data();
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx.iter() {
            data.extend_from_slice(&xd[i * d..(i + 1) * d]);
        }
        let shape = vec![idx.len(), d];
        self.push(Tensor::from_raw(shape, data), Op::GatherRows(x, idx), &[x])
    }

    /// `m · v` for `m: [n, d]`, `v: [d]`, giving `[n]`.
    pub fn matvec(&mut self, m: Var, v: Var) -> Result<Var> {
        let (n, d) = self.matrix_dims(m, "matvec")?;
        if self.value(v).rank() != 1 || self.value(v).len() != d {
            return Err(Error::dim(format!("matvec: {:?} x {:?}", self.shape(m), self.shape(v))));
        }
        let vd = self.value(v).data();
        let mv = self.value(m);
        let data = (0..n).map(|r| dot(mv.row(r), vd)).collect();
        self.push(Tensor::from_raw(vec![n], data), Op::MatVec(m, v), &[m, v])
    }

    /// `vᵀ · m` for `v: [n]`, `m: [n, d]`, giving `[d]`.
    pub fn vecmat(&mut self, v: Var, m: Var) -> Result<Var> {
        let (n, d) = self.matrix_dims(m, "vecmat")?;
        if self.value(v).rank() != 1 || self.value(v).len() != n {
            return Err(Error::dim(format!("vecmat: {:?} x {:?}", self.shape(v), self.shape(m))));
        }
        let mut out = vec![T::zero(); d];
        let mv = self.value(m);
        for (r, &w) in self.value(v).data().iter().enumerate() {
            axpy(w, mv.row(r), &mut out);
        }
        self.push(Tensor::from_raw(vec![d], out), Op::VecMat(v, m), &[v, m])
    }

    /// Column sums of a matrix.
    pub fn sum_rows(&mut self, x: Var) -> Result<Var> {
        let (n, d) = self.matrix_dims(x, "sum_rows")?;
        let mut out = vec![T::zero(); d];
        let xv = self.value(x);
        for r in 0..n {
            axpy(T::one(), xv.row(r), &mut out);
        }
        self.push(Tensor::from_raw(vec![d], out), Op::SumRows(x), &[x])
    }

    /// Column means of a matrix.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (n, d) = self.matrix_dims(x, "mean_rows")?;
        let mut out = vec![T::zero(); d];
        let xv = self.value(x);
        for r in 0..n {
            axpy(T::one(), xv.row(r), &mut out);
        }
        let inv = T::one() / T::of(n as f64);
        out.iter_mut().for_each(|v| *v = *v * inv);
        self.push(Tensor::from_raw(vec![d], out), Op::MeanRows(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).sum();
        self.push(Tensor::from_raw(vec![], vec![s]), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let s = t.sum() / T::of(t.len() as f64);
        self.push(Tensor::from_raw(vec![], vec![s]), Op::Mean(x), &[x])
    }

    /// Negative log of `probs[label]`, clamping the probability at 1e-12.
    pub fn nll(&mut self, probs: Var, label: usize) -> Result<Var> {
        let p = self.value(probs);
        if p.rank() != 1 || label >= p.len() {
            return Err(Error::dim(format!(
                "nll: label {label} for probabilities {:?}",
                p.shape()
            )));
        }
        let pl = p.data()[label];
        let floor = T::of(NLL_FLOOR);
        if pl < floor {
            self.clamped += 1;
        }
        let loss = -(pl.max(floor)).ln();
        self.push(Tensor::from_raw(vec![], vec![loss]), Op::Nll(probs, label), &[probs])
    }

    /// Runs the backward pass from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::dim(format!("backward from non-scalar {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::filled(self.shape(loss), T::one()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        for g in grads.iter().flatten() {
            check_finite(g.data())?;
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            &Op::Linear(x, w) => {
                let xv = self.value(x);
                let wv = self.value(w);
                let (n, d_in) = xv.as_matrix_dims();
                let d_out = wv.shape()[0];
                if self.wants(x) {
                    let dx = self.buf(grads, x);
                    for r in 0..n {
                        let dst = &mut dx[r * d_in..(r + 1) * d_in];
                        for o in 0..d_out {
                            axpy(gd[r * d_out + o], wv.row(o), dst);
                        }
                    }
                }
                if self.wants(w) {
                    let dw = self.buf(grads, w);
                    for r in 0..n {
                        let xr = xv.row(r);
                        for o in 0..d_out {
                            axpy(gd[r * d_out + o], xr, &mut dw[o * d_in..(o + 1) * d_in]);
                        }
                    }
                }
            }
            &Op::MatMul(a, b) => {
                let av = self.value(a);
                let bv = self.value(b);
                let (n, k) = av.as_matrix_dims();
                let m = bv.shape()[1];
                if self.wants(a) {
                    let da = self.buf(grads, a);
                    for i in 0..n {
                        for p in 0..k {
                            da[i * k + p] = da[i * k + p] + dot(&gd[i * m..(i + 1) * m], bv.row(p));
                        }
                    }
                }
                if self.wants(b) {
                    let db = self.buf(grads, b);
                    for i in 0..n {
                        for p in 0..k {
                            axpy(
                                av.data()[i * k + p],
                                &gd[i * m..(i + 1) * m],
                                &mut db[p * m..(p + 1) * m],
                            );
                        }
                    }
                }
            }
            Op::SparseMatMul(a, x) => {
                let x = *x;
                if self.wants(x) {
                    let d = self.value(x).shape()[1];
                    let dx = self.buf(grads, x);
                    for (i, row) in a.rows.iter().enumerate() {
                        for &(j, w) in row {
                            axpy(w, &gd[i * d..(i + 1) * d], &mut dx[j * d..(j + 1) * d]);
                        }
                    }
                }
            }
            &Op::Add(a, b) => {
                self.accumulate(grads, a, |i| gd[i]);
                self.accumulate(grads, b, |i| gd[i]);
            }
            &Op::Sub(a, b) => {
                self.accumulate(grads, a, |i| gd[i]);
                self.accumulate(grads, b, |i| -gd[i]);
            }
            &Op::Mul(a, b) => {
                let (ad, bd) = (self.value(a).data(), self.value(b).data());
                self.accumulate(grads, a, |i| gd[i] * bd[i]);
                self.accumulate(grads, b, |i| gd[i] * ad[i]);
            }
            &Op::AddRow(x, row) => {
                self.accumulate(grads, x, |i| gd[i]);
                if self.wants(row) {
                    let d = self.value(row).len();
                    let dr = self.buf(grads, row);
                    for chunk in gd.chunks(d) {
                        axpy(T::one(), chunk, dr);
                    }
                }
            }
            &Op::Scale(x, s) => self.accumulate(grads, x, |i| gd[i] * s),
            &Op::Tanh(x) => {
                let y = node.value.data();
                self.accumulate(grads, x, |i| gd[i] * (T::one() - y[i] * y[i]));
            }
            &Op::Sigmoid(x) => {
                let y = node.value.data();
                self.accumulate(grads, x, |i| gd[i] * y[i] * (T::one() - y[i]));
            }
            &Op::Softmax(x) => {
                if self.wants(x) {
                    let (n, d) = node.value.as_matrix_dims();
                    let y = node.value.data();
                    let dx = self.buf(grads, x);
                    for r in 0..n {
                        let ys = &y[r * d..(r + 1) * d];
                        let gs = &gd[r * d..(r + 1) * d];
                        let inner = dot(ys, gs);
                        for c in 0..d {
                            dx[r * d + c] = dx[r * d + c] + ys[c] * (gs[c] - inner);
                        }
                    }
                }
            }
            &Op::SliceRows(x, start) => {
                if self.wants(x) {
                    let d = node.value.shape()[1];
                    let dx = self.buf(grads, x);
                    axpy(T::one(), gd, &mut dx[start * d..start * d + gd.len()]);
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if self.wants(p) {
                        let dp = self.buf(grads, p);
                        axpy(T::one(), &gd[offset..offset + len], dp);
                    }
                    offset += len;
                }
            }
            &Op::ConcatLast(a, b) => {
                let (n, da) = self.value(a).as_matrix_dims();
                let db = self.value(b).as_matrix_dims().1;
                let w = da + db;
                self.accumulate(grads, a, |i| gd[(i / da) * w + i % da]);
                self.accumulate(grads, b, |i| gd[(i / db) * w + da + i % db]);
                debug_assert_eq!(gd.len(), n * w);
            }
            Op::GatherRows(x, idx) => {
                let x = *x;
                if self.wants(x) {
                    let d = node.value.shape()[1];
                    let dx = self.buf(grads, x);
                    for (r, &src) in idx.iter().enumerate() {
                        axpy(T::one(), &gd[r * d..(r + 1) * d], &mut dx[src * d..(src + 1) * d]);
                    }
                }
            }
            &Op::MatVec(m, v) => {
                let mv = self.value(m);
                let vd = self.value(v).data();
                let d = vd.len();
                if self.wants(m) {
                    let dm = self.buf(grads, m);
                    for (r, &gr) in gd.iter().enumerate() {
                        axpy(gr, vd, &mut dm[r * d..(r + 1) * d]);
                    }
                }
                if self.wants(v) {
                    let dv = self.buf(grads, v);
                    for (r, &gr) in gd.iter().enumerate() {
                        axpy(gr, mv.row(r), dv);
                    }
                }
            }
            &Op::VecMat(v, m) => {
                let mv = self.value(m);
                let vd = self.value(v).data();
                let d = gd.len();
                if self.wants(v) {
                    let dv = self.buf(grads, v);
                    for (r, slot) in dv.iter_mut().enumerate() {
                        *slot = *slot + dot(mv.row(r), gd);
                    }
                }
                if self.wants(m) {
                    let dm = self.buf(grads, m);
                    for (r, &w) in vd.iter().enumerate() {
                        axpy(w, gd, &mut dm[r * d..(r + 1) * d]);
                    }
                }
            }
            &Op::SumRows(x) => {
                let d = gd.len();
                self.accumulate(grads, x, |i| gd[i % d]);
            }
            &Op::MeanRows(x) => {
                let d = gd.len();
                let inv = T::one() / T::of((self.value(x).len() / d) as f64);
                self.accumulate(grads, x, |i| gd[i % d] * inv);
            }
            &Op::Sum(x) => self.accumulate(grads, x, |_| gd[0]),
            &Op::Mean(x) => {
                let inv = T::one() / T::of(self.value(x).len() as f64);
                self.accumulate(grads, x, |_| gd[0] * inv);
            }
            &Op::Nll(p, label) => {
                if self.wants(p) {
                    let pl = self.value(p).data()[label];
                    let floor = T::of(NLL_FLOOR);
                    let dp = self.buf(grads, p);
                    if pl >= floor {
                        dp[label] = dp[label] - gd[0] / pl;
                    }
                }
            }
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn buf<'g>(&self, grads: &'g mut [Option<Tensor<T>>], v: Var) -> &'g mut [T] {
        grads[v.0]
            .get_or_insert_with(|| Tensor::zeros(self.shape(v)))
            .data_mut()
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, f: impl Fn(usize) -> T) {
        if !self.wants(v) {
            return;
        }
        for (i, slot) in self.buf(grads, v).iter_mut().enumerate() {
            *slot = *slot + f(i);
        }
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc = acc + x * y;
    }
    acc
}

#[inline]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (d, &s) in y.iter_mut().zip(x) {
        *d = *d + alpha * s;
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
