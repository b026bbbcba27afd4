use std::cell::{Cell, RefCell};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use super::kernels::{self, dot, log_sum_exp, norm, softmax_in_place, COSINE_EPS};
use super::Tensor;
use crate::error::{Error, Result};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    id: usize,
}

impl Var {
    pub fn id(&self) -> usize {
        self.id
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Div(Var, f64),
    AddBias(Var, Var),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    StackRows(Vec<Var>),
    Concat(Vec<Var>),
    Row(Var, usize),
    TileRows(Var),
    Reshape(Var),
    MeanRows(Var),
    Mean(Var),
    Sum(Var),
    Softmax(Var),
    Sigmoid(Var),
    Tanh(Var),
    Gelu(Var),
    CosineMatrix(Var, Var),
    RowMin(Var, Vec<usize>),
    ColMin(Var, Vec<usize>),
    MaxAll(Var, usize),
    Diag(Var),
    Dtw(Var, Vec<(usize, usize)>),
    CrossEntropy(Var, Vec<usize>, Tensor),
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
}

/// Single-use record of a forward pass.
///
/// Every operation appends one node; [`Tape::backward`] walks the nodes in
/// reverse and may run only once. Min/max selections route their gradient
/// to the selected element (lowest index on ties) and record the gap to the
/// runner-up, available through [`Tape::selection_margin`].
pub struct Tape {
    id: u64,
    nodes: RefCell<Vec<Node>>,
    consumed: Cell<bool>,
    margin: Cell<f64>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, or `None` when `v` does not
    /// influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        assert_eq!(v.tape, self.tape, "Var from a different tape");
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::new()),
            consumed: Cell::new(false),
            margin: Cell::new(f64::INFINITY),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Smallest gap between a selected minimum/maximum and its runner-up seen
    /// so far. Infinite if no selection had a competitor.
    pub fn selection_margin(&self) -> f64 {
        self.margin.get()
    }

    fn note_margin(&self, m: f64) {
        if m < self.margin.get() {
            self.margin.set(m);
        }
    }

    fn push(&self, value: Tensor, op: Op) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
        });
        Var {
            tape: self.id,
            id: nodes.len() - 1,
        }
    }

    pub fn leaf(&self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> Rc<Tensor> {
        assert_eq!(v.tape, self.id, "Var from a different tape");
        Rc::clone(&self.nodes.borrow()[v.id].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.value(v).shape().to_vec()
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::matmul(&self.value(a), &self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_with(&self.value(b), |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_with(&self.value(b), |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_with(&self.value(b), |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale(a, s))
    }

    /// `a / s`, elementwise. Kept apart from [`scale`](Self::scale) so means
    /// round exactly like a direct division.
    pub fn div_scalar(&self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x / s);
        self.push(out, Op::Div(a, s))
    }

    /// `a + b` with `b` (`[n]`) added to every row of `a` (`m x n`).
    pub fn add_bias(&self, a: Var, b: Var) -> Result<Var> {
        let av = self.value(a);
        let bv = self.value(b);
        if av.ndim() != 2 || bv.ndim() != 1 || av.cols() != bv.len() {
            return Err(Error::dim("add_bias", av.shape(), bv.shape()));
        }
        let mut out = av.data().to_vec();
        for row in out.chunks_mut(bv.len()) {
            for (o, &x) in row.iter_mut().zip(bv.data()) {
                *o += x;
            }
        }
        Ok(self.push(Tensor::from_parts(av.shape().to_vec(), out), Op::AddBias(a, b)))
    }

    pub fn transpose(&self, a: Var) -> Result<Var> {
        let out = kernels::transpose(&self.value(a))?;
        Ok(self.push(out, Op::Transpose(a)))
    }

    /// Concatenates matrices with equal row counts along the channel axis.
    pub fn concat_cols(&self, parts: &[Var]) -> Result<Var> {
        let vals: Vec<_> = parts.iter().map(|&p| self.value(p)).collect();
        let Some(first) = vals.first() else {
            return Err(Error::Domain("concat_cols of nothing".into()));
        };
        let rows = first.rows();
        for v in &vals {
            if v.ndim() != 2 || v.rows() != rows {
                return Err(Error::dim("concat_cols", first.shape(), v.shape()));
            }
        }
        let total: usize = vals.iter().map(|v| v.cols()).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for v in &vals {
                out.extend_from_slice(v.row(r));
            }
        }
        Ok(self.push(
            Tensor::from_parts(vec![rows, total], out),
            Op::ConcatCols(parts.to_vec()),
        ))
    }

    /// Stacks equally long vectors into a matrix, one per row.
    pub fn stack_rows(&self, rows: &[Var]) -> Result<Var> {
        let vals: Vec<_> = rows.iter().map(|&p| self.value(p)).collect();
        let Some(first) = vals.first() else {
            return Err(Error::Domain("stack_rows of nothing".into()));
        };
        for v in &vals {
            if v.ndim() != 1 || v.len() != first.len() {
                return Err(Error::dim("stack_rows", first.shape(), v.shape()));
            }
        }
        let c = first.len();
        let data: Vec<f64> = vals.iter().flat_map(|v| v.data().iter().copied()).collect();
        Ok(self.push(
            Tensor::from_parts(vec![vals.len(), c], data),
            Op::StackRows(rows.to_vec()),
        ))
    }

    /// Flattens scalars and vectors into one vector.
    pub fn concat(&self, parts: &[Var]) -> Result<Var> {
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.ndim() > 1 {
                return Err(Error::dim("concat", &[0], v.shape()));
            }
            data.extend_from_slice(v.data());
        }
        if data.is_empty() {
            return Err(Error::Domain("concat of nothing".into()));
        }
        Ok(self.push(
            Tensor::from_parts(vec![data.len()], data),
            Op::Concat(parts.to_vec()),
        ))
    }

    pub fn row(&self, a: Var, i: usize) -> Result<Var> {
        let av = self.value(a);
        if av.ndim() != 2 || i >= av.rows() {
            return Err(Error::dim("row", av.shape(), &[i]));
        }
        let out = Tensor::from_parts(vec![av.cols()], av.row(i).to_vec());
        Ok(self.push(out, Op::Row(a, i)))
    }

    /// Repeats vector `v` (`[C]`) as `rows` identical rows.
    pub fn tile_rows(&self, v: Var, rows: usize) -> Result<Var> {
        let vv = self.value(v);
        if vv.ndim() != 1 || rows == 0 {
            return Err(Error::dim("tile_rows", vv.shape(), &[rows]));
        }
        let data = vv.data().repeat(rows);
        Ok(self.push(Tensor::from_parts(vec![rows, vv.len()], data), Op::TileRows(v)))
    }

    pub fn reshape(&self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).reshape(shape)?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    /// Temporal global average pooling: `T x C` to `[C]`.
    pub fn mean_rows(&self, a: Var) -> Result<Var> {
        let out = kernels::global_avg_pool(&self.value(a))?;
        Ok(self.push(out, Op::MeanRows(a)))
    }

    pub fn mean(&self, a: Var) -> Var {
        let av = self.value(a);
        let s: f64 = av.data().iter().sum();
        self.push(Tensor::scalar(s / av.len() as f64), Op::Mean(a))
    }

    /// Mean whose value does not depend on the order of the elements
    /// (they are summed in sorted order).
    pub fn set_mean(&self, a: Var) -> Var {
        let av = self.value(a);
        let out = Tensor::scalar(order_free_mean(av.data()));
        self.push(out, Op::Mean(a))
    }

    pub fn sum(&self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn softmax(&self, a: Var) -> Var {
        let out = kernels::softmax(&self.value(a));
        self.push(out, Op::Softmax(a))
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * std_normal_cdf(x));
        self.push(out, Op::Gelu(a))
    }

    pub fn cosine_distance_matrix(&self, x: Var, y: Var) -> Result<Var> {
        let out = kernels::cosine_distance_matrix(&self.value(x), &self.value(y))?;
        Ok(self.push(out, Op::CosineMatrix(x, y)))
    }

    /// Cosine distance between two `[C]` vectors, as a scalar.
    pub fn cosine_distance(&self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 1 || sa != sb {
            return Err(Error::dim("cosine_distance", &sa, &sb));
        }
        let a2 = self.reshape(a, &[1, sa[0]])?;
        let b2 = self.reshape(b, &[1, sb[0]])?;
        let d = self.cosine_distance_matrix(a2, b2)?;
        self.reshape(d, &[])
    }

    /// Minimum of every row (`N x M` to `[N]`).
    pub fn row_min(&self, d: Var) -> Result<Var> {
        let dv = self.value(d);
        if dv.ndim() != 2 {
            return Err(Error::dim("row_min", dv.shape(), &[0, 0]));
        }
        let mut vals = Vec::with_capacity(dv.rows());
        let mut idx = Vec::with_capacity(dv.rows());
        for row in dv.row_iter() {
            let (i, v, m) = select_min(row.iter().copied());
            self.note_margin(m);
            vals.push(v);
            idx.push(i);
        }
        Ok(self.push(Tensor::from_parts(vec![vals.len()], vals), Op::RowMin(d, idx)))
    }

    /// Minimum of every column (`N x M` to `[M]`).
    pub fn col_min(&self, d: Var) -> Result<Var> {
        let dv = self.value(d);
        if dv.ndim() != 2 {
            return Err(Error::dim("col_min", dv.shape(), &[0, 0]));
        }
        let (n, m) = (dv.rows(), dv.cols());
        let mut vals = Vec::with_capacity(m);
        let mut idx = Vec::with_capacity(m);
        for j in 0..m {
            let (i, v, gap) = select_min((0..n).map(|i| dv.data()[i * m + j]));
            self.note_margin(gap);
            vals.push(v);
            idx.push(i);
        }
        Ok(self.push(Tensor::from_parts(vec![m], vals), Op::ColMin(d, idx)))
    }

    /// Maximum over all elements, as a scalar.
    pub fn max_all(&self, a: Var) -> Var {
        let av = self.value(a);
        let (i, v, gap) = select_min(av.data().iter().map(|&x| -x));
        self.note_margin(gap);
        self.push(Tensor::scalar(-v), Op::MaxAll(a, i))
    }

    /// Main diagonal of a square matrix.
    pub fn diag(&self, d: Var) -> Result<Var> {
        let dv = self.value(d);
        if dv.ndim() != 2 || dv.rows() != dv.cols() {
            return Err(Error::dim("diag", dv.shape(), &[dv.rows(), dv.rows()]));
        }
        let n = dv.rows();
        let out: Vec<f64> = (0..n).map(|i| dv.data()[i * n + i]).collect();
        Ok(self.push(Tensor::from_parts(vec![n], out), Op::Diag(d)))
    }

    /// Minimal cumulative cost over monotone warping paths of a cost matrix.
    pub fn dtw(&self, d: Var) -> Result<Var> {
        let dv = self.value(d);
        if dv.ndim() != 2 {
            return Err(Error::dim("dtw", dv.shape(), &[0, 0]));
        }
        let (cost, path, gap) = dtw_with_path(&dv);
        self.note_margin(gap);
        Ok(self.push(Tensor::scalar(cost), Op::Dtw(d, path)))
    }

    /// Mean softmax cross-entropy of `logits` (`R x N`, or `[N]` for one
    /// row) against class indices `targets` (one per row).
    pub fn cross_entropy(&self, logits: Var, targets: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        let n = lv.cols();
        let rows = if lv.ndim() == 1 { 1 } else { lv.rows() };
        if lv.ndim() > 2 || rows != targets.len() {
            return Err(Error::dim("cross_entropy", lv.shape(), &[targets.len()]));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= n) {
            return Err(Error::Domain(format!(
                "cross_entropy target {bad} out of range for {n} classes"
            )));
        }
        let mut probs = lv.data().to_vec();
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = &lv.data()[r * n..(r + 1) * n];
            total += log_sum_exp(row) - row[t];
            softmax_in_place(&mut probs[r * n..(r + 1) * n]);
        }
        let probs = Tensor::from_parts(lv.shape().to_vec(), probs);
        Ok(self.push(
            Tensor::scalar(total / rows as f64),
            Op::CrossEntropy(logits, targets.to_vec(), probs),
        ))
    }

    /// Reverse sweep from the scalar `loss`. A tape supports exactly one call.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        assert_eq!(loss.tape, self.id, "Var from a different tape");
        if self.consumed.replace(true) {
            return Err(Error::Usage("backward already ran on this tape".into()));
        }
        let nodes = self.nodes.borrow();
        if nodes[loss.id].value.len() != 1 {
            return Err(Error::dim("backward", nodes[loss.id].value.shape(), &[]));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(Tensor::full(nodes[loss.id].value.shape(), 1.0));

        for i in (0..=loss.id).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            let val = |v: Var| Rc::clone(&nodes[v.id].value);
            let mut acc = |v: Var, t: Tensor| accumulate(&mut grads, v, t);
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    acc(*a, kernels::matmul(&g, &kernels::transpose(&bv)?)?);
                    acc(*b, kernels::matmul(&kernels::transpose(&av)?, &g)?);
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    acc(*a, g.zip_with(&bv, |x, y| x * y)?);
                    acc(*b, g.zip_with(&av, |x, y| x * y)?);
                }
                Op::Scale(a, s) => acc(*a, g.map(|x| x * s)),
                Op::Div(a, s) => acc(*a, g.map(|x| x / s)),
                Op::AddBias(a, b) => {
                    let n = val(*b).len();
                    let mut gb = vec![0.0; n];
                    for row in g.row_iter() {
                        for (o, x) in gb.iter_mut().zip(row) {
                            *o += x;
                        }
                    }
                    acc(*a, g.clone());
                    acc(*b, Tensor::from_parts(vec![n], gb));
                }
                Op::Transpose(a) => acc(*a, kernels::transpose(&g)?),
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    let total = g.cols();
                    for &p in parts {
                        let c = val(p).cols();
                        let mut part = Vec::with_capacity(g.rows() * c);
                        for r in 0..g.rows() {
                            part.extend_from_slice(&g.data()[r * total + offset..r * total + offset + c]);
                        }
                        acc(p, Tensor::from_parts(vec![g.rows(), c], part));
                        offset += c;
                    }
                }
                Op::StackRows(rows) => {
                    for (r, &p) in rows.iter().enumerate() {
                        acc(p, Tensor::from_parts(vec![g.cols()], g.row(r).to_vec()));
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pv = val(p);
                        let n = pv.len();
                        acc(p, Tensor::from_parts(pv.shape().to_vec(), g.data()[offset..offset + n].to_vec()));
                        offset += n;
                    }
                }
                Op::Row(a, i) => {
                    let av = val(*a);
                    let mut ga = Tensor::zeros(av.shape());
                    let c = av.cols();
                    ga.data_mut()[i * c..(i + 1) * c].copy_from_slice(g.data());
                    acc(*a, ga);
                }
                Op::TileRows(v) => {
                    let mut gv = vec![0.0; g.cols()];
                    for row in g.row_iter() {
                        for (o, x) in gv.iter_mut().zip(row) {
                            *o += x;
                        }
                    }
                    acc(*v, Tensor::from_parts(vec![g.cols()], gv));
                }
                Op::Reshape(a) => acc(*a, Tensor::from_parts(val(*a).shape().to_vec(), g.data().to_vec())),
                Op::MeanRows(a) => {
                    let av = val(*a);
                    let t = av.rows() as f64;
                    let row: Vec<f64> = g.data().iter().map(|x| x / t).collect();
                    acc(*a, Tensor::from_parts(av.shape().to_vec(), row.repeat(av.rows())));
                }
                Op::Mean(a) => {
                    let av = val(*a);
                    acc(*a, Tensor::full(av.shape(), g.item() / av.len() as f64));
                }
                Op::Sum(a) => acc(*a, Tensor::full(val(*a).shape(), g.item())),
                Op::Softmax(a) => {
                    let y = &node.value;
                    let n = y.cols();
                    let mut ga = Vec::with_capacity(y.len());
                    for (yr, gr) in y.data().chunks(n).zip(g.data().chunks(n)) {
                        let s = dot(yr, gr);
                        ga.extend(yr.iter().zip(gr).map(|(yi, gi)| yi * (gi - s)));
                    }
                    acc(*a, Tensor::from_parts(y.shape().to_vec(), ga));
                }
                Op::Sigmoid(a) => acc(*a, g.zip_with(&node.value, |gi, y| gi * y * (1.0 - y))?),
                Op::Tanh(a) => acc(*a, g.zip_with(&node.value, |gi, y| gi * (1.0 - y * y))?),
                Op::Gelu(a) => {
                    let xv = val(*a);
                    acc(*a, g.zip_with(&xv, |gi, x| gi * (std_normal_cdf(x) + x * std_normal_pdf(x)))?);
                }
                Op::CosineMatrix(x, y) => {
                    let (gx, gy) = cosine_matrix_backward(&val(*x), &val(*y), &g);
                    acc(*x, gx);
                    acc(*y, gy);
                }
                Op::RowMin(d, idx) => {
                    let dv = val(*d);
                    let m = dv.cols();
                    let mut gd = Tensor::zeros(dv.shape());
                    for (r, &j) in idx.iter().enumerate() {
                        gd.data_mut()[r * m + j] += g.data()[r];
                    }
                    acc(*d, gd);
                }
                Op::ColMin(d, idx) => {
                    let dv = val(*d);
                    let m = dv.cols();
                    let mut gd = Tensor::zeros(dv.shape());
                    for (c, &i) in idx.iter().enumerate() {
                        gd.data_mut()[i * m + c] += g.data()[c];
                    }
                    acc(*d, gd);
                }
                Op::MaxAll(a, i) => {
                    let mut ga = Tensor::zeros(val(*a).shape());
                    ga.data_mut()[*i] = g.item();
                    acc(*a, ga);
                }
                Op::Diag(d) => {
                    let n = g.len();
                    let mut gd = Tensor::zeros(&[n, n]);
                    for i in 0..n {
                        gd.data_mut()[i * n + i] = g.data()[i];
                    }
                    acc(*d, gd);
                }
                Op::Dtw(d, path) => {
                    let dv = val(*d);
                    let m = dv.cols();
                    let mut gd = Tensor::zeros(dv.shape());
                    for &(i, j) in path {
                        gd.data_mut()[i * m + j] += g.item();
                    }
                    acc(*d, gd);
                }
                Op::CrossEntropy(logits, targets, probs) => {
                    let n = probs.cols();
                    let rows = targets.len() as f64;
                    let mut gl = probs.data().to_vec();
                    for (r, &t) in targets.iter().enumerate() {
                        gl[r * n + t] -= 1.0;
                    }
                    let s = g.item() / rows;
                    gl.iter_mut().for_each(|x| *x *= s);
                    acc(*logits, Tensor::from_parts(probs.shape().to_vec(), gl));
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients {
            tape: self.id,
            grads,
        })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, t: Tensor) {
    match &mut grads[v.id] {
        Some(existing) => {
            for (e, x) in existing.data_mut().iter_mut().zip(t.data()) {
                *e += x;
            }
        }
        slot @ None => *slot = Some(t),
    }
}

/// Index, value and runner-up gap of the minimum; ties go to the lowest index.
fn select_min(values: impl Iterator<Item = f64>) -> (usize, f64, f64) {
    let mut best = (0usize, f64::INFINITY);
    let mut second = f64::INFINITY;
    for (i, v) in values.enumerate() {
        if v < best.1 {
            second = best.1;
            best = (i, v);
        } else if v < second {
            second = v;
        }
    }
    (best.0, best.1, second - best.1)
}

pub(crate) fn order_free_mean(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().sum::<f64>() / values.len() as f64
}

pub(crate) fn dtw_cost(d: &Tensor) -> f64 {
    dtw_with_path(d).0
}

/// Cumulative DTW cost with steps (i-1,j), (i,j-1), (i-1,j-1), the optimal
/// path (start to end) and the smallest predecessor gap along that path.
/// Ties prefer the diagonal, then (i-1,j), then (i,j-1).
pub(crate) fn dtw_with_path(d: &Tensor) -> (f64, Vec<(usize, usize)>, f64) {
    let (n, m) = (d.rows(), d.cols());
    let mut acc = vec![f64::INFINITY; n * m];
    for i in 0..n {
        for j in 0..m {
            let c = d.data()[i * m + j];
            acc[i * m + j] = if i == 0 && j == 0 {
                c
            } else {
                let mut best = f64::INFINITY;
                if i > 0 && j > 0 {
                    best = best.min(acc[(i - 1) * m + j - 1]);
                }
                if i > 0 {
                    best = best.min(acc[(i - 1) * m + j]);
                }
                if j > 0 {
                    best = best.min(acc[i * m + j - 1]);
                }
                c + best
            };
        }
    }
    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    let mut gap = f64::INFINITY;
    while i > 0 || j > 0 {
        let mut cands = Vec::with_capacity(3);
        if i > 0 && j > 0 {
            cands.push((i - 1, j - 1));
        }
        if i > 0 {
            cands.push((i - 1, j));
        }
        if j > 0 {
            cands.push((i, j - 1));
        }
        let (k, _, g) = select_min(cands.iter().map(|&(a, b)| acc[a * m + b]));
        gap = gap.min(g);
        (i, j) = cands[k];
        path.push((i, j));
    }
    path.reverse();
    (acc[n * m - 1], path, gap)
}

fn cosine_matrix_backward(x: &Tensor, y: &Tensor, g: &Tensor) -> (Tensor, Tensor) {
    let (n, m, c) = (x.rows(), y.rows(), x.cols());
    let mut gx = Tensor::zeros(x.shape());
    let mut gy = Tensor::zeros(y.shape());
    let xn: Vec<f64> = x.row_iter().map(norm).collect();
    let yn: Vec<f64> = y.row_iter().map(norm).collect();
    for a in 0..n {
        if xn[a] < COSINE_EPS {
            continue;
        }
        for b in 0..m {
            if yn[b] < COSINE_EPS {
                continue;
            }
            let gab = g.data()[a * m + b];
            if gab == 0.0 {
                continue;
            }
            let (xr, yr) = (x.row(a), y.row(b));
            let cos = dot(xr, yr) / (xn[a] * yn[b]);
            // d(1 - cos)/dx = -(y/(|x||y|) - cos * x/|x|^2)
            let sx = gab / (xn[a] * yn[b]);
            let tx = gab * cos / (xn[a] * xn[a]);
            let ty = gab * cos / (yn[b] * yn[b]);
            for k in 0..c {
                gx.data_mut()[a * c + k] -= sx * yr[k] - tx * xr[k];
                gy.data_mut()[b * c + k] -= sx * xr[k] - ty * yr[k];
            }
        }
    }
    (gx, gy)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{self, check_point, primitive_cases, relative_error};
    use crate::rng::{stream_rng, Stream};

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn sum_gradient_is_all_ones() {
        let tape = Tape::new();
        let x = tape.leaf(t(&[2, 3], &[1.0, -2.0, 3.0, 0.5, 0.0, 9.0]));
        let s = tape.sum(x);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn backward_twice_is_a_usage_error() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(2.0));
        let y = tape.scale(x, 3.0);
        tape.backward(y).unwrap();
        assert!(matches!(tape.backward(y), Err(Error::Usage(_))));
    }

    #[test]
    fn backward_requires_scalar() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[2]));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn cosine_gradient_at_orthogonal_pair() {
        let inputs = [t(&[2], &[1.0, 0.0]), t(&[2], &[0.0, 1.0])];
        let err = check_point(&inputs, |tape, v| tape.cosine_distance(v[0], v[1]))
            .unwrap()
            .unwrap();
        assert!(err < 1e-4, "{err}");
        // analytic value: d/da (1 - a.b/|a||b|) = -(b - cos a)/|a| = (0, -1)
        let tape = Tape::new();
        let a = tape.leaf(inputs[0].clone());
        let b = tape.leaf(inputs[1].clone());
        let d = tape.cosine_distance(a, b).unwrap();
        let g = tape.backward(d).unwrap();
        assert_eq!(g.get(a).unwrap().data(), &[0.0, -1.0]);
        assert_eq!(g.get(b).unwrap().data(), &[-1.0, 0.0]);
    }

    #[test]
    fn zero_norm_cosine_is_constant() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(&[3]));
        let b = tape.leaf(t(&[3], &[1.0, 2.0, 3.0]));
        let d = tape.cosine_distance(a, b).unwrap();
        assert_eq!(tape.value(d).item(), 1.0);
        let g = tape.backward(d).unwrap();
        assert_eq!(g.get(a).unwrap().data(), &[0.0; 3]);
    }

    #[test]
    fn softmax_matmul_chain_matches_finite_differences() {
        let mut rng = stream_rng(5, Stream::GradCheck, 0);
        let err = gradcheck::check_random(
            &mut rng,
            20,
            |r| vec![gradcheck::uniform(r, &[3, 4], 1.0), gradcheck::uniform(r, &[4, 3], 1.0)],
            |tape, v| {
                let s = tape.softmax(v[0]);
                let p = tape.matmul(s, v[1])?;
                gradcheck::weighted_sum(tape, p)
            },
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn every_primitive_matches_finite_differences() {
        for (i, case) in primitive_cases().iter().enumerate() {
            let mut rng = stream_rng(1, Stream::GradCheck, i as u64);
            let err = case.run(&mut rng, 10).unwrap();
            assert!(err < 1e-4, "{}: {err}", case.name);
        }
    }

    #[test]
    fn min_routes_to_lowest_index_on_ties() {
        let tape = Tape::new();
        let d = tape.leaf(t(&[2, 3], &[0.5, 0.2, 0.2, 0.1, 0.1, 0.3]));
        let r = tape.row_min(d).unwrap();
        let s = tape.sum(r);
        assert_eq!(tape.selection_margin(), 0.0);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(d).unwrap().data(), &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn cross_entropy_uniform_is_ln_n() {
        let tape = Tape::new();
        let l = tape.leaf(Tensor::zeros(&[2, 5]));
        let ce = tape.cross_entropy(l, &[0, 4]).unwrap();
        assert!((tape.value(ce).item() - 5f64.ln()).abs() < 1e-15);
        assert!(tape.cross_entropy(l, &[0, 5]).is_err());
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 1e-6).abs() < 1e-18);
    }
}
