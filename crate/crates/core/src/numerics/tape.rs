//! Reverse-mode differentiation over a recorded sequence of matrix operations.
//!
//! Every value on the tape is a 2-D matrix `[rows, cols]`; vectors are stored
//! as single rows or single columns. Index selections (`gather_rows`,
//! `scatter_rows`) take their indices as plain data, so gradients flow
//! through the selected values but never through the choice of indices.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::numerics::ops::{matmul_raw, minmax_in_place, softmax_in_place, LOG_CLAMP};
use crate::numerics::Tensor;
use crate::real::Real;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `[m,n] + [1,n]`
    AddRow(Var, Var),
    /// `[m,n] ⊙ [1,n]`
    MulRow(Var, Var),
    /// `[m,n] ⊙ [m,1]`
    MulCol(Var, Var),
    /// `scale·x + shift`
    Affine(Var, T),
    Relu(Var),
    Gelu(Var),
    Abs(Var),
    SoftmaxRows(Var),
    LayerNormRows(Var, T),
    MeanRows(Var),
    SumCols(Var),
    MeanAll(Var),
    GatherRows(Var, Vec<usize>),
    ScatterRows {
        src: Var,
        fill: Var,
        positions: Vec<usize>,
    },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    Reshape(Var),
    MinMaxRows(Var),
    NormalizeAll(Var),
    Nll(Var, usize),
}

struct Node<T> {
    rows: usize,
    cols: usize,
    value: Vec<T>,
    op: Op<T>,
}

/// Recorded computation; consumed by [`Tape::backward`].
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of a scalar with respect to every recorded value.
pub struct Grads<T> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<(usize, usize)>,
}

impl<T: Real> Grads<T> {
    /// Gradient of `v` as a flat row-major buffer; zeros when `v` did not
    /// influence the output.
    pub fn get(&self, v: Var) -> Vec<T> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                vec![T::zero(); r * c]
            }
        }
    }
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<T>, op: Op<T>) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node { rows, cols, value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let n = &self.nodes[v.0];
        Tensor::from_parts(vec![n.rows, n.cols], n.value.clone())
    }

    /// Records an input. Tensors of any rank are viewed as `[rows, last axis]`.
    pub fn leaf(&mut self, t: &Tensor<T>) -> Var {
        let (r, c) = if t.ndim() == 1 { (1, t.len()) } else { (t.rows(), t.cols()) };
        self.push(r, c, t.data().to_vec(), Op::Leaf)
    }

    pub fn leaf_raw(&mut self, rows: usize, cols: usize, value: Vec<T>) -> Var {
        assert_eq!(rows * cols, value.len(), "leaf buffer does not match its shape");
        self.push(rows, cols, value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((m, k), (k2, n)) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(shape_err!("matmul [{m},{k}]·[{k2},{n}]"));
        }
        let out = matmul_raw(self.value(a), self.value(b), m, k, n);
        Ok(self.push(m, n, out, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let src = self.value(a);
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        self.push(c, r, out, Op::Transpose(a))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<(usize, usize)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err!("{what} of {sa:?} and {sb:?}"));
        }
        Ok(sa)
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>, what: &str) -> Result<Var> {
        let (r, c) = self.same_shape(a, b, what)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| f(x, y)).collect();
        Ok(self.push(r, c, out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, |x, y| x + y, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b), "mul")
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let ((r, c), (one, c2)) = (self.shape(a), self.shape(row));
        if one != 1 || c != c2 {
            return Err(shape_err!("add_row [{r},{c}] + [{one},{c2}]"));
        }
        let b = self.value(row);
        let out = self.value(a).chunks(c).flat_map(|x| x.iter().zip(b).map(|(&u, &v)| u + v)).collect();
        Ok(self.push(r, c, out, Op::AddRow(a, row)))
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let ((r, c), (one, c2)) = (self.shape(a), self.shape(row));
        if one != 1 || c != c2 {
            return Err(shape_err!("mul_row [{r},{c}] ⊙ [{one},{c2}]"));
        }
        let b = self.value(row);
        let out = self.value(a).chunks(c).flat_map(|x| x.iter().zip(b).map(|(&u, &v)| u * v)).collect();
        Ok(self.push(r, c, out, Op::MulRow(a, row)))
    }

    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let ((r, c), (r2, one)) = (self.shape(a), self.shape(col));
        if one != 1 || r != r2 {
            return Err(shape_err!("mul_col [{r},{c}] ⊙ [{r2},{one}]"));
        }
        let s = self.value(col);
        let out = self.value(a).chunks(c).zip(s).flat_map(|(x, &k)| x.iter().map(move |&u| u * k)).collect();
        Ok(self.push(r, c, out, Op::MulCol(a, col)))
    }

    /// `scale·a + shift`.
    pub fn affine(&mut self, a: Var, scale: T, shift: T) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|&x| scale * x + shift).collect();
        self.push(r, c, out, Op::Affine(a, scale))
    }

    fn map(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|&x| f(x)).collect();
        self.push(r, c, out, op)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(T::zero()), Op::Relu(a))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let (k, c) = (T::lit(GELU_K), T::lit(GELU_C));
        let half = T::lit(0.5);
        self.map(a, |x| half * x * (T::one() + (k * (x + c * x * x * x)).tanh()), Op::Gelu(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.map(a, |x| x.abs(), Op::Abs(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let mut out = self.value(a).to_vec();
        out.chunks_mut(c).for_each(softmax_in_place);
        self.push(r, c, out, Op::SoftmaxRows(a))
    }

    /// Per-row standardization `(x − mean) / sqrt(var + eps)` without affine terms.
    pub fn layer_norm_rows(&mut self, a: Var, eps: T) -> Var {
        let (r, c) = self.shape(a);
        let mut out = self.value(a).to_vec();
        for row in out.chunks_mut(c) {
            let (mean, rstd) = row_stats(row, eps);
            row.iter_mut().for_each(|v| *v = (*v - mean) * rstd);
        }
        self.push(r, c, out, Op::LayerNormRows(a, eps))
    }

    /// Mean over rows: `[m,n] → [1,n]`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let mut out = vec![T::zero(); c];
        for row in self.value(a).chunks(c) {
            out.iter_mut().zip(row).for_each(|(o, &v)| *o = *o + v);
        }
        let scale = T::one() / T::lit(r as f64);
        out.iter_mut().for_each(|v| *v = *v * scale);
        self.push(1, c, out, Op::MeanRows(a))
    }

    /// Sum over columns: `[m,n] → [m,1]`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).chunks(c).map(|row| row.iter().copied().sum()).collect();
        self.push(r, 1, out, Op::SumCols(a))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let mean = v.iter().copied().sum::<T>() / T::lit(v.len() as f64);
        self.push(1, 1, vec![mean], Op::MeanAll(a))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let (r, c) = self.shape(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(shape_err!("row {bad} out of range for {r} rows"));
        }
        let src = self.value(a);
        let out = idx.iter().flat_map(|&i| src[i * c..(i + 1) * c].iter().copied()).collect();
        Ok(self.push(idx.len(), c, out, Op::GatherRows(a, idx.to_vec())))
    }

    /// Builds a `[total, n]` matrix whose row `positions[j]` is row `j` of
    /// `src` and whose remaining rows copy the single row `fill`.
    pub fn scatter_rows(&mut self, src: Var, fill: Var, positions: &[usize], total: usize) -> Result<Var> {
        let ((k, c), (one, c2)) = (self.shape(src), self.shape(fill));
        if one != 1 || c != c2 || k != positions.len() || positions.iter().any(|&p| p >= total) {
            return Err(shape_err!("scatter of [{k},{c}] with fill [{one},{c2}] into {total} rows"));
        }
        let mut out: Vec<T> = self.value(fill).iter().copied().cycle().take(total * c).collect();
        let s = self.value(src);
        for (j, &p) in positions.iter().enumerate() {
            out[p * c..(p + 1) * c].copy_from_slice(&s[j * c..(j + 1) * c]);
        }
        Ok(self.push(total, c, out, Op::ScatterRows { src, fill, positions: positions.to_vec() }))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let c = self.shape(parts[0]).1;
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (r, c2) = self.shape(p);
            if c2 != c {
                return Err(shape_err!("concat_rows width {c2} vs {c}"));
            }
            rows += r;
            out.extend_from_slice(self.value(p));
        }
        Ok(self.push(rows, c, out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let r = self.shape(parts[0]).0;
        let mut cols = 0;
        for &p in parts {
            let (r2, c) = self.shape(p);
            if r2 != r {
                return Err(shape_err!("concat_cols height {r2} vs {r}"));
            }
            cols += c;
        }
        let mut out = Vec::with_capacity(r * cols);
        for i in 0..r {
            for &p in parts {
                let c = self.shape(p).1;
                out.extend_from_slice(&self.value(p)[i * c..(i + 1) * c]);
            }
        }
        Ok(self.push(r, cols, out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if start + len > c || len == 0 {
            return Err(shape_err!("columns {start}..{} of width {c}", start + len));
        }
        let src = self.value(a);
        let out = (0..r).flat_map(|i| src[i * c + start..i * c + start + len].iter().copied()).collect();
        Ok(self.push(r, len, out, Op::SliceCols(a, start)))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if r * c != rows * cols {
            return Err(shape_err!("reshape [{r},{c}] to [{rows},{cols}]"));
        }
        let out = self.value(a).to_vec();
        Ok(self.push(rows, cols, out, Op::Reshape(a)))
    }

    /// Per-row min-max normalization; constant rows map to ones.
    pub fn minmax_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let mut out = self.value(a).to_vec();
        out.chunks_mut(c).for_each(|row| {
            minmax_in_place(row);
        });
        self.push(r, c, out, Op::MinMaxRows(a))
    }

    /// Divides every entry by the total sum.
    pub fn normalize_all(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let v = self.value(a);
        let sum: T = v.iter().copied().sum();
        let out = v.iter().map(|&x| x / sum).collect();
        self.push(r, c, out, Op::NormalizeAll(a))
    }

    /// `−ln(max(p[label], 1e-12))` for a probability row `p: [1, N]`.
    pub fn nll(&mut self, p: Var, label: usize) -> Result<Var> {
        let (r, c) = self.shape(p);
        if r != 1 || label >= c {
            return Err(shape_err!("nll of [{r},{c}] at label {label}"));
        }
        let loss = -self.value(p)[label].max(T::lit(LOG_CLAMP)).ln();
        Ok(self.push(1, 1, vec![loss], Op::Nll(p, label)))
    }

    /// Gradients of the scalar `out` with respect to every recorded value.
    pub fn backward(&self, out: Var) -> Grads<T> {
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<T>>> = vec![None; n];
        let (r, c) = self.shape(out);
        grads[out.0] = Some(vec![T::one(); r * c]);

        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Grads { grads, shapes: self.nodes.iter().map(|n| (n.rows, n.cols)).collect() }
    }

    fn backprop(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let (rows, cols) = (node.rows, node.cols);
        let y = &node.value;

        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [T])| {
            let len = self.nodes[v.0].value.len();
            let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); len]);
            f(slot);
        };

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.shape(*a);
                let n = cols;
                let (av, bv) = (self.value(*a), self.value(*b));
                // dA = G·Bᵀ, dB = Aᵀ·G
                acc(*a, &mut |da| {
                    for p in 0..m {
                        let grow = &g[p * n..(p + 1) * n];
                        for q in 0..k {
                            let brow = &bv[q * n..(q + 1) * n];
                            let s: T = grow.iter().zip(brow).map(|(&x, &y)| x * y).sum();
                            da[p * k + q] = da[p * k + q] + s;
                        }
                    }
                });
                acc(*b, &mut |db| {
                    for p in 0..m {
                        let grow = &g[p * n..(p + 1) * n];
                        for q in 0..k {
                            let a_pq = av[p * k + q];
                            if a_pq == T::zero() {
                                continue;
                            }
                            for (d, &gv) in db[q * n..(q + 1) * n].iter_mut().zip(grow) {
                                *d = *d + a_pq * gv;
                            }
                        }
                    }
                });
            }
            Op::Transpose(a) => acc(*a, &mut |da| {
                for p in 0..rows {
                    for q in 0..cols {
                        da[q * rows + p] = da[q * rows + p] + g[p * cols + q];
                    }
                }
            }),
            Op::Add(a, b) => {
                acc(*a, &mut |d| add_into(d, g));
                acc(*b, &mut |d| add_into(d, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |d| add_into(d, g));
                acc(*b, &mut |d| d.iter_mut().zip(g).for_each(|(x, &gv)| *x = *x - gv));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, &mut |d| {
                    for j in 0..d.len() {
                        d[j] = d[j] + g[j] * bv[j];
                    }
                });
                acc(*b, &mut |d| {
                    for j in 0..d.len() {
                        d[j] = d[j] + g[j] * av[j];
                    }
                });
            }
            Op::AddRow(a, b) => {
                acc(*a, &mut |d| add_into(d, g));
                acc(*b, &mut |d| {
                    for grow in g.chunks(cols) {
                        add_into(d, grow);
                    }
                });
            }
            Op::MulRow(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, &mut |d| {
                    for j in 0..d.len() {
                        d[j] = d[j] + g[j] * bv[j % cols];
                    }
                });
                acc(*b, &mut |d| {
                    for j in 0..g.len() {
                        d[j % cols] = d[j % cols] + g[j] * av[j];
                    }
                });
            }
            Op::MulCol(a, s) => {
                let (av, sv) = (self.value(*a), self.value(*s));
                acc(*a, &mut |d| {
                    for j in 0..d.len() {
                        d[j] = d[j] + g[j] * sv[j / cols];
                    }
                });
                acc(*s, &mut |d| {
                    for j in 0..g.len() {
                        d[j / cols] = d[j / cols] + g[j] * av[j];
                    }
                });
            }
            Op::Affine(a, scale) => acc(*a, &mut |d| d.iter_mut().zip(g).for_each(|(x, &gv)| *x = *x + *scale * gv)),
            Op::Relu(a) => {
                let av = self.value(*a);
                acc(*a, &mut |d| {
                    for j in 0..d.len() {
                        if av[j] > T::zero() {
                            d[j] = d[j] + g[j];
                        }
                    }
                })
            }
            Op::Gelu(a) => {
                let av = self.value(*a);
                let (k, c, half) = (T::lit(GELU_K), T::lit(GELU_C), T::lit(0.5));
                let three = T::lit(3.0);
                acc(*a, &mut |d| {
                    for j in 0..d.len() {
                        let x = av[j];
                        let t = (k * (x + c * x * x * x)).tanh();
                        let dt = (T::one() - t * t) * k * (T::one() + three * c * x * x);
                        d[j] = d[j] + g[j] * (half * (T::one() + t) + half * x * dt);
                    }
                })
            }
            Op::Abs(a) => {
                let av = self.value(*a);
                acc(*a, &mut |d| {
                    for j in 0..d.len() {
                        d[j] = d[j] + g[j] * sign(av[j]);
                    }
                })
            }
            Op::SoftmaxRows(a) => acc(*a, &mut |d| {
                for ((drow, grow), yrow) in d.chunks_mut(cols).zip(g.chunks(cols)).zip(y.chunks(cols)) {
                    let dot: T = grow.iter().zip(yrow).map(|(&u, &v)| u * v).sum();
                    for j in 0..cols {
                        drow[j] = drow[j] + yrow[j] * (grow[j] - dot);
                    }
                }
            }),
            Op::LayerNormRows(a, eps) => {
                let av = self.value(*a);
                let inv = T::one() / T::lit(cols as f64);
                acc(*a, &mut |d| {
                    for r in 0..rows {
                        let (_, rstd) = row_stats(&av[r * cols..(r + 1) * cols], *eps);
                        let yrow = &y[r * cols..(r + 1) * cols];
                        let grow = &g[r * cols..(r + 1) * cols];
                        let mean_g = grow.iter().copied().sum::<T>() * inv;
                        let mean_gy = grow.iter().zip(yrow).map(|(&u, &v)| u * v).sum::<T>() * inv;
                        for j in 0..cols {
                            let v = rstd * (grow[j] - mean_g - yrow[j] * mean_gy);
                            d[r * cols + j] = d[r * cols + j] + v;
                        }
                    }
                })
            }
            Op::MeanRows(a) => {
                let r = self.shape(*a).0;
                let scale = T::one() / T::lit(r as f64);
                acc(*a, &mut |d| {
                    for drow in d.chunks_mut(cols) {
                        drow.iter_mut().zip(g).for_each(|(x, &gv)| *x = *x + gv * scale);
                    }
                })
            }
            Op::SumCols(a) => {
                let c = self.shape(*a).1;
                acc(*a, &mut |d| {
                    for (drow, &gv) in d.chunks_mut(c).zip(g) {
                        drow.iter_mut().for_each(|x| *x = *x + gv);
                    }
                })
            }
            Op::MeanAll(a) => {
                let n = self.value(*a).len();
                let gv = g[0] / T::lit(n as f64);
                acc(*a, &mut |d| d.iter_mut().for_each(|x| *x = *x + gv))
            }
            Op::GatherRows(a, idx) => acc(*a, &mut |d| {
                for (j, &src) in idx.iter().enumerate() {
                    add_into(&mut d[src * cols..(src + 1) * cols], &g[j * cols..(j + 1) * cols]);
                }
            }),
            Op::ScatterRows { src, fill, positions } => {
                acc(*src, &mut |d| {
                    for (j, &p) in positions.iter().enumerate() {
                        add_into(&mut d[j * cols..(j + 1) * cols], &g[p * cols..(p + 1) * cols]);
                    }
                });
                let mut visible = vec![false; rows];
                positions.iter().for_each(|&p| visible[p] = true);
                acc(*fill, &mut |d| {
                    for (r, grow) in g.chunks(cols).enumerate() {
                        if !visible[r] {
                            add_into(d, grow);
                        }
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    acc(p, &mut |d| add_into(d, &g[offset..offset + len]));
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for &p in parts {
                    let c = self.shape(p).1;
                    acc(p, &mut |d| {
                        for r in 0..rows {
                            add_into(&mut d[r * c..(r + 1) * c], &g[r * cols + start..r * cols + start + c]);
                        }
                    });
                    start += c;
                }
            }
            Op::SliceCols(a, start) => {
                let c = self.shape(*a).1;
                acc(*a, &mut |d| {
                    for r in 0..rows {
                        add_into(&mut d[r * c + start..r * c + start + cols], &g[r * cols..(r + 1) * cols]);
                    }
                })
            }
            Op::Reshape(a) => acc(*a, &mut |d| add_into(d, g)),
            Op::MinMaxRows(a) => {
                let av = self.value(*a);
                acc(*a, &mut |d| {
                    for r in 0..rows {
                        let xrow = &av[r * cols..(r + 1) * cols];
                        let mut tmp = xrow.to_vec();
                        let Some((lo, hi)) = minmax_in_place(&mut tmp) else { continue };
                        let range = xrow[hi] - xrow[lo];
                        let yrow = &y[r * cols..(r + 1) * cols];
                        let grow = &g[r * cols..(r + 1) * cols];
                        let drow = &mut d[r * cols..(r + 1) * cols];
                        let (mut d_min, mut d_max) = (T::zero(), T::zero());
                        for j in 0..cols {
                            drow[j] = drow[j] + grow[j] / range;
                            d_min = d_min + grow[j] * (yrow[j] - T::one()) / range;
                            d_max = d_max - grow[j] * yrow[j] / range;
                        }
                        drow[lo] = drow[lo] + d_min;
                        drow[hi] = drow[hi] + d_max;
                    }
                })
            }
            Op::NormalizeAll(a) => {
                let av = self.value(*a);
                let sum: T = av.iter().copied().sum();
                let dot: T = g.iter().zip(y).map(|(&u, &v)| u * v).sum();
                acc(*a, &mut |d| {
                    for j in 0..d.len() {
                        d[j] = d[j] + (g[j] - dot) / sum;
                    }
                })
            }
            Op::Nll(p, label) => {
                let pv = self.value(*p)[*label];
                if pv > T::lit(LOG_CLAMP) {
                    let label = *label;
                    acc(*p, &mut |d| d[label] = d[label] - g[0] / pv);
                }
            }
        }
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d = *d + s);
}

fn sign<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

fn row_stats<T: Real>(row: &[T], eps: T) -> (T, T) {
    let n = T::lit(row.len() as f64);
    let mean = row.iter().copied().sum::<T>() / n;
    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    (mean, T::one() / (var + eps).sqrt())
}
