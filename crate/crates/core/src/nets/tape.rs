//! Reverse-mode differentiation over 2-D `f64` matrices.
//!
//! A [`Tape`] records every operation of a forward pass; [`Tape::backward`]
//! walks it in reverse and accumulates gradients for every node that
//! depends on a leaf marked as requiring gradients. Rows are batch items
//! throughout.

use std::borrow::Cow;

use ndarray::{s, Array2, Axis, Zip};

use super::NetError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Geometry of a 1-D convolution over channel-major rows.
///
/// An input row holds `in_ch` blocks of `len` samples; the output row holds
/// `out_ch` blocks of `out_len` samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv1dShape {
    pub in_ch: usize,
    pub len: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv1dShape {
    pub fn out_len(&self) -> usize {
        (self.len - self.kernel) / self.stride + 1
    }

    /// Unfolds one input row into a `(out_len, in_ch * kernel)` patch matrix.
    fn im2col(&self, row: ndarray::ArrayView1<f64>) -> Array2<f64> {
        let out_len = self.out_len();
        let mut cols = Array2::zeros((out_len, self.in_ch * self.kernel));
        for t in 0..out_len {
            let start = t * self.stride;
            for c in 0..self.in_ch {
                let src = row.slice(s![c * self.len + start..c * self.len + start + self.kernel]);
                cols.slice_mut(s![t, c * self.kernel..(c + 1) * self.kernel]).assign(&src);
            }
        }
        cols
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    AddRow(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Affine(usize, f64),
    Relu(usize),
    Tanh(usize),
    Exp(usize),
    Softplus(usize),
    Square(usize),
    Clamp(usize, f64, f64),
    Min(usize, usize),
    Concat(Vec<usize>),
    Slice(usize, usize, usize),
    SumCols(usize),
    Sum(usize),
    Mean(usize),
    Conv1d(usize, usize, usize, Conv1dShape),
}

struct Node<'a> {
    value: Cow<'a, Array2<f64>>,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

/// Gradients of a scalar with respect to every recorded node.
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// `None` when the node does not influence the loss.
    pub fn wrt(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient, or zeros of `shape` when the node is off the loss path.
    pub fn wrt_or_zeros(&self, v: Var, shape: (usize, usize)) -> Array2<f64> {
        self.wrt(v).cloned().unwrap_or_else(|| Array2::zeros(shape))
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

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    fn push(&mut self, value: Array2<f64>, op: Op, inputs: &[usize]) -> Var {
        let needs_grad = inputs.iter().any(|i| self.nodes[*i].needs_grad);
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Owned input or parameter.
    pub fn leaf(&mut self, value: Array2<f64>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op: Op::Leaf,
            needs_grad: requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Borrowed leaf; avoids copying large parameter matrices.
    pub fn leaf_ref(&mut self, value: &'a Array2<f64>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(value),
            op: Op::Leaf,
            needs_grad: requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(self.value(b));
        self.push(out, Op::MatMul(a.0, b.0), &[a.0, b.0])
    }

    /// `a + b` with `b` a single row broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) + self.value(b);
        self.push(out, Op::AddRow(a.0, b.0), &[a.0, b.0])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) + self.value(b);
        self.push(out, Op::Add(a.0, b.0), &[a.0, b.0])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) - self.value(b);
        self.push(out, Op::Sub(a.0, b.0), &[a.0, b.0])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) * self.value(b);
        self.push(out, Op::Mul(a.0, b.0), &[a.0, b.0])
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let out = self.value(a).mapv(|x| scale * x + shift);
        self.push(out, Op::Affine(a.0, scale), &[a.0])
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.affine(a, k, 0.0)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| x.max(0.0));
        self.push(out, Op::Relu(a.0), &[a.0])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::tanh);
        self.push(out, Op::Tanh(a.0), &[a.0])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::exp);
        self.push(out, Op::Exp(a.0), &[a.0])
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(softplus);
        self.push(out, Op::Softplus(a.0), &[a.0])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| x * x);
        self.push(out, Op::Square(a.0), &[a.0])
    }

    /// Elementwise clamp; the gradient is zero where the bound is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(a).mapv(|x| x.clamp(lo, hi));
        self.push(out, Op::Clamp(a.0, lo, hi), &[a.0])
    }

    pub fn min(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        Zip::from(&mut out).and(self.value(b)).for_each(|x, y| *x = x.min(*y));
        self.push(out, Op::Min(a.0, b.0), &[a.0, b.0])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("concat: row counts differ");
        let idx: Vec<usize> = parts.iter().map(|p| p.0).collect();
        self.push(out, Op::Concat(idx.clone()), &idx)
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let out = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(out, Op::Slice(a.0, start, end), &[a.0])
    }

    /// Row sums, `(n, m) -> (n, 1)`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let out = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(out, Op::SumCols(a.0), &[a.0])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(out, Op::Sum(a.0), &[a.0])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = Array2::from_elem((1, 1), v.sum() / v.len() as f64);
        self.push(out, Op::Mean(a.0), &[a.0])
    }

    /// 1-D convolution: `x` is `(batch, in_ch * len)`, `w` is
    /// `(out_ch, in_ch * kernel)`, `b` is `(1, out_ch)`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, shape: Conv1dShape) -> Var {
        let xv = self.value(x);
        let wv = self.value(w);
        let bv = self.value(b);
        let out_len = shape.out_len();
        let batch = xv.nrows();
        let mut out = Array2::zeros((batch, shape.out_ch * out_len));
        for (n, row) in xv.rows().into_iter().enumerate() {
            let cols = shape.im2col(row);
            // (out_len, out_ch)
            let y = cols.dot(&wv.t()) + bv;
            let mut dst = out.row_mut(n);
            for c in 0..shape.out_ch {
                dst.slice_mut(s![c * out_len..(c + 1) * out_len]).assign(&y.column(c));
            }
        }
        self.push(out, Op::Conv1d(x.0, w.0, b.0, shape), &[x.0, w.0, b.0])
    }

    fn accumulate(grads: &mut [Option<Array2<f64>>], i: usize, g: Array2<f64>) {
        match &mut grads[i] {
            Some(acc) => *acc += &g,
            slot => *slot = Some(g),
        }
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NetError> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(NetError::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Array2::ones((1, 1)));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            let want = |j: usize| self.nodes[j].needs_grad;
            let val = |j: usize| -> &Array2<f64> { &self.nodes[j].value };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if want(*a) {
                        Self::accumulate(&mut grads, *a, g.dot(&val(*b).t()));
                    }
                    if want(*b) {
                        Self::accumulate(&mut grads, *b, val(*a).t().dot(&g));
                    }
                }
                Op::AddRow(a, b) => {
                    if want(*b) {
                        Self::accumulate(&mut grads, *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if want(*a) {
                        Self::accumulate(&mut grads, *a, g.clone());
                    }
                }
                Op::Add(a, b) => {
                    if want(*b) {
                        Self::accumulate(&mut grads, *b, g.clone());
                    }
                    if want(*a) {
                        Self::accumulate(&mut grads, *a, g.clone());
                    }
                }
                Op::Sub(a, b) => {
                    if want(*b) {
                        Self::accumulate(&mut grads, *b, -&g);
                    }
                    if want(*a) {
                        Self::accumulate(&mut grads, *a, g.clone());
                    }
                }
                Op::Mul(a, b) => {
                    if want(*a) {
                        Self::accumulate(&mut grads, *a, &g * val(*b));
                    }
                    if want(*b) {
                        Self::accumulate(&mut grads, *b, &g * val(*a));
                    }
                }
                Op::Affine(a, k) => Self::accumulate(&mut grads, *a, g.mapv(|x| x * k)),
                Op::Relu(a) => {
                    let mut d = g.clone();
                    Zip::from(&mut d).and(val(*a)).for_each(|d, x| {
                        if *x <= 0.0 {
                            *d = 0.0
                        }
                    });
                    Self::accumulate(&mut grads, *a, d);
                }
                Op::Tanh(a) => {
                    let mut d = g.clone();
                    Zip::from(&mut d).and(&*node.value).for_each(|d, y| *d *= 1.0 - y * y);
                    Self::accumulate(&mut grads, *a, d);
                }
                Op::Exp(a) => Self::accumulate(&mut grads, *a, &g * &*node.value),
                Op::Softplus(a) => {
                    let mut d = g.clone();
                    Zip::from(&mut d).and(val(*a)).for_each(|d, x| *d *= sigmoid(*x));
                    Self::accumulate(&mut grads, *a, d);
                }
                Op::Square(a) => {
                    let mut d = g.clone();
                    Zip::from(&mut d).and(val(*a)).for_each(|d, x| *d *= 2.0 * x);
                    Self::accumulate(&mut grads, *a, d);
                }
                Op::Clamp(a, lo, hi) => {
                    let mut d = g.clone();
                    Zip::from(&mut d).and(val(*a)).for_each(|d, x| {
                        if *x < *lo || *x > *hi {
                            *d = 0.0
                        }
                    });
                    Self::accumulate(&mut grads, *a, d);
                }
                Op::Min(a, b) => {
                    let mut da = g.clone();
                    let mut db = g.clone();
                    Zip::from(&mut da)
                        .and(&mut db)
                        .and(val(*a))
                        .and(val(*b))
                        .for_each(|da, db, x, y| {
                            if x <= y {
                                *db = 0.0
                            } else {
                                *da = 0.0
                            }
                        });
                    if want(*a) {
                        Self::accumulate(&mut grads, *a, da);
                    }
                    if want(*b) {
                        Self::accumulate(&mut grads, *b, db);
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let w = val(*p).ncols();
                        if want(*p) {
                            Self::accumulate(&mut grads, *p, g.slice(s![.., off..off + w]).to_owned());
                        }
                        off += w;
                    }
                }
                Op::Slice(a, start, end) => {
                    let mut d = Array2::zeros(val(*a).dim());
                    d.slice_mut(s![.., *start..*end]).assign(&g);
                    Self::accumulate(&mut grads, *a, d);
                }
                Op::SumCols(a) => {
                    let d = g.broadcast(val(*a).dim()).expect("column broadcast").to_owned();
                    Self::accumulate(&mut grads, *a, d);
                }
                Op::Sum(a) => {
                    Self::accumulate(&mut grads, *a, Array2::from_elem(val(*a).dim(), g[[0, 0]]));
                }
                Op::Mean(a) => {
                    let n = val(*a).len() as f64;
                    Self::accumulate(&mut grads, *a, Array2::from_elem(val(*a).dim(), g[[0, 0]] / n));
                }
                Op::Conv1d(x, w, b, shape) => {
                    let (dx, dw, db) = self.conv1d_backward(&g, *x, *w, *shape, want(*x));
                    if want(*w) {
                        Self::accumulate(&mut grads, *w, dw);
                    }
                    if want(*b) {
                        Self::accumulate(&mut grads, *b, db);
                    }
                    if let Some(dx) = dx {
                        Self::accumulate(&mut grads, *x, dx);
                    }
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn conv1d_backward(
        &self,
        g: &Array2<f64>,
        x: usize,
        w: usize,
        shape: Conv1dShape,
        want_x: bool,
    ) -> (Option<Array2<f64>>, Array2<f64>, Array2<f64>) {
        let xv = &self.nodes[x].value;
        let wv: &Array2<f64> = &self.nodes[w].value;
        let out_len = shape.out_len();
        let mut dw = Array2::zeros(wv.dim());
        let mut db = Array2::zeros((1, shape.out_ch));
        let mut dx = want_x.then(|| Array2::zeros(xv.dim()));
        for (n, row) in xv.rows().into_iter().enumerate() {
            let cols = shape.im2col(row);
            // (out_len, out_ch) view of this item's output gradient
            let mut gy = Array2::zeros((out_len, shape.out_ch));
            let grow = g.row(n);
            for c in 0..shape.out_ch {
                gy.column_mut(c).assign(&grow.slice(s![c * out_len..(c + 1) * out_len]));
            }
            dw += &gy.t().dot(&cols);
            db += &gy.sum_axis(Axis(0)).insert_axis(Axis(0));
            if let Some(dx) = dx.as_mut() {
                let dcols = gy.dot(wv);
                let mut drow = dx.row_mut(n);
                for t in 0..out_len {
                    let start = t * shape.stride;
                    for c in 0..shape.in_ch {
                        let mut dst = drow.slice_mut(s![c * shape.len + start..c * shape.len + start + shape.kernel]);
                        dst += &dcols.slice(s![t, c * shape.kernel..(c + 1) * shape.kernel]);
                    }
                }
            }
        }
        (dx, dw, db)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};

    #[test]
    fn square_derivative() {
        let mut t = Tape::new();
        let w = t.leaf(array![[3.0]], true);
        let y = t.square(w);
        let l = t.sum(y);
        let g = t.backward(l).unwrap();
        assert_eq!(g.wrt(w).unwrap()[[0, 0]], 6.0);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut t = Tape::new();
        let w = t.leaf(array![[1.0, 2.0]], true);
        assert!(matches!(t.backward(w), Err(NetError::NonScalarLoss((1, 2)))));
    }

    #[test]
    fn off_path_leaves_get_nothing() {
        let mut t = Tape::new();
        let a = t.leaf(array![[1.0, 2.0]], true);
        let b = t.leaf(array![[5.0]], true);
        let l = t.sum(a);
        let g = t.backward(l).unwrap();
        assert!(g.wrt(b).is_none());
        assert_eq!(g.wrt_or_zeros(b, (1, 1)), array![[0.0]]);
    }

    type Build = fn(&mut Tape, Var) -> Var;

    /// Central-difference check of d(loss)/d(input) for a unary graph.
    fn fd_check(x0: Array2<f64>, build: Build) {
        let eval = |x: &Array2<f64>| {
            let mut t = Tape::new();
            let v = t.leaf(x.clone(), true);
            let out = build(&mut t, v);
            let l = t.sum(out);
            t.scalar(l)
        };
        let mut t = Tape::new();
        let v = t.leaf(x0.clone(), true);
        let out = build(&mut t, v);
        let l = t.sum(out);
        let g = t.backward(l).unwrap().wrt(v).unwrap().clone();
        let h = 1e-5;
        for idx in ndarray::indices(x0.dim()) {
            let mut xp = x0.clone();
            xp[idx] += h;
            let mut xm = x0.clone();
            xm[idx] -= h;
            let num = (eval(&xp) - eval(&xm)) / (2.0 * h);
            let err = (num - g[idx]).abs() / num.abs().max(g[idx].abs()).max(1e-6);
            assert!(err < 1e-5, "idx {idx:?}: analytic {} numeric {num}", g[idx]);
        }
    }

    fn rand_mat(rng: &mut impl Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.gen_range(-1.5..1.5))
    }

    #[test]
    fn elementwise_ops_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x = rand_mat(&mut rng, 3, 4);
        fd_check(x.clone(), |t, v| t.tanh(v));
        fd_check(x.clone(), |t, v| t.exp(v));
        fd_check(x.clone(), |t, v| t.softplus(v));
        fd_check(x.clone(), |t, v| t.square(v));
        fd_check(x.clone(), |t, v| t.affine(v, -2.5, 0.3));
        fd_check(x.clone(), |t, v| t.clamp(v, -1.0, 1.0));
        fd_check(x.clone(), |t, v| {
            let y = t.relu(v);
            t.mean(y)
        });
        fd_check(x.clone(), |t, v| {
            let a = t.slice_cols(v, 0, 2);
            let b = t.slice_cols(v, 2, 4);
            let m = t.min(a, b);
            let p = t.mul(m, a);
            let c = t.concat_cols(&[p, b]);
            t.sum_cols(c)
        });
        fd_check(x, |t, v| {
            let sq = t.square(v);
            t.sub(v, sq)
        });
    }

    #[test]
    fn matmul_and_bias_grads() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let x = rand_mat(&mut rng, 4, 3);
        let w = rand_mat(&mut rng, 3, 2);
        let b = rand_mat(&mut rng, 1, 2);
        let mut t = Tape::new();
        let xv = t.leaf(x.clone(), false);
        let wv = t.leaf(w.clone(), true);
        let bv = t.leaf(b.clone(), true);
        let h = t.matmul(xv, wv);
        let y = t.add_row(h, bv);
        let s = t.square(y);
        let l = t.sum(s);
        let g = t.backward(l).unwrap();
        let y0 = x.dot(&w) + &b;
        let dw = x.t().dot(&(y0.mapv(|v| 2.0 * v)));
        let db = y0.mapv(|v| 2.0 * v).sum_axis(Axis(0));
        assert!((g.wrt(wv).unwrap() - &dw).iter().all(|e| e.abs() < 1e-12));
        assert!((g.wrt(bv).unwrap().row(0).to_owned() - &db).iter().all(|e| e.abs() < 1e-12));
        assert!(g.wrt(xv).is_none());
    }

    #[test]
    fn conv1d_forward_matches_direct_sum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let shape = Conv1dShape {
            in_ch: 2,
            len: 9,
            out_ch: 3,
            kernel: 3,
            stride: 2,
        };
        let x = rand_mat(&mut rng, 2, 18);
        let w = rand_mat(&mut rng, 3, 6);
        let b = rand_mat(&mut rng, 1, 3);
        let mut t = Tape::new();
        let (xv, wv, bv) = (t.leaf(x.clone(), false), t.leaf(w.clone(), false), t.leaf(b.clone(), false));
        let y = t.conv1d(xv, wv, bv, shape);
        let out_len = shape.out_len();
        assert_eq!(out_len, 4);
        for n in 0..2 {
            for o in 0..3 {
                for p in 0..out_len {
                    let mut acc = b[[0, o]];
                    for c in 0..2 {
                        for k in 0..3 {
                            acc += w[[o, c * 3 + k]] * x[[n, c * 9 + p * 2 + k]];
                        }
                    }
                    assert!((t.value(y)[[n, o * out_len + p]] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn conv1d_grads_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let shape = Conv1dShape {
            in_ch: 2,
            len: 11,
            out_ch: 3,
            kernel: 5,
            stride: 2,
        };
        let params = [rand_mat(&mut rng, 2, 22), rand_mat(&mut rng, 3, 10), rand_mat(&mut rng, 1, 3)];
        let weights = rand_mat(&mut rng, 2, 3 * shape.out_len());
        let eval = |p: &[Array2<f64>; 3]| {
            let mut t = Tape::new();
            let v: Vec<Var> = p.iter().map(|m| t.leaf(m.clone(), true)).collect();
            let y = t.conv1d(v[0], v[1], v[2], shape);
            let k = t.leaf(weights.clone(), false);
            let z = t.mul(y, k);
            let z = t.tanh(z);
            let l = t.sum(z);
            (t.scalar(l), t.backward(l).unwrap(), v)
        };
        let (_, g, vars) = eval(&params);
        let h = 1e-5;
        for which in 0..3 {
            let analytic = g.wrt(vars[which]).unwrap().clone();
            for idx in ndarray::indices(params[which].dim()) {
                let mut p = params.clone();
                p[which][idx] += h;
                let up = eval(&p).0;
                p[which][idx] -= 2.0 * h;
                let down = eval(&p).0;
                let num = (up - down) / (2.0 * h);
                let err = (num - analytic[idx]).abs() / num.abs().max(analytic[idx].abs()).max(1e-6);
                assert!(err < 1e-5, "param {which} {idx:?}: {} vs {num}", analytic[idx]);
            }
        }
    }
}
