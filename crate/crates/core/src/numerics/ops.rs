//! Pure array operations shared by the tape and the public API.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg_err, shape_err, Result};
use crate::numerics::Tensor;
use crate::real::Real;

/// Probabilities below this are clamped before taking a logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

/// In-place max-subtracted softmax of a contiguous lane.
pub(crate) fn softmax_in_place<T: Real>(lane: &mut [T]) {
    let max = lane.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in lane.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    for v in lane.iter_mut() {
        *v = *v / sum;
    }
}

/// Min-max normalization of a lane; a constant lane becomes all ones.
/// Returns the (argmin, argmax) used, or `None` for the degenerate case.
pub(crate) fn minmax_in_place<T: Real>(lane: &mut [T]) -> Option<(usize, usize)> {
    let (mut lo, mut hi) = (0, 0);
    for (i, &v) in lane.iter().enumerate() {
        if v < lane[lo] {
            lo = i;
        }
        if v > lane[hi] {
            hi = i;
        }
    }
    let (min, max) = (lane[lo], lane[hi]);
    if max == min {
        lane.iter_mut().for_each(|v| *v = T::one());
        return None;
    }
    let range = max - min;
    for v in lane.iter_mut() {
        *v = (*v - min) / range;
    }
    Some((lo, hi))
}

fn map_lanes<T: Real>(x: &Tensor<T>, axis: usize, f: impl Fn(&mut [T])) -> Result<Tensor<T>> {
    let (outer, len, inner) = x.lanes(axis)?;
    let mut out = x.data().to_vec();
    let mut lane = vec![T::zero(); len];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            for k in 0..len {
                lane[k] = out[base + k * inner];
            }
            f(&mut lane);
            for k in 0..len {
                out[base + k * inner] = lane[k];
            }
        }
    }
    Ok(Tensor::from_parts(x.shape().to_vec(), out))
}

/// Softmax along `axis`, stabilized by subtracting the lane maximum.
pub fn softmax<T: Real>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    map_lanes(x, axis, softmax_in_place)
}

/// Min-max normalization of every lane along `axis` to [0, 1].
pub fn minmax_normalize<T: Real>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    map_lanes(x, axis, |lane| {
        minmax_in_place(lane);
    })
}

/// Arithmetic mean along `axis`; the axis is dropped from the result.
pub fn avgpool<T: Real>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let (outer, len, inner) = x.lanes(axis)?;
    let scale = T::one() / T::lit(len as f64);
    let mut out = vec![T::zero(); outer * inner];
    for o in 0..outer {
        for k in 0..len {
            let src = &x.data()[(o * len + k) * inner..(o * len + k + 1) * inner];
            for (acc, &v) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                *acc = *acc + v;
            }
        }
    }
    out.iter_mut().for_each(|v| *v = *v * scale);
    let mut shape = x.shape().to_vec();
    shape.remove(axis);
    if shape.is_empty() {
        shape.push(1);
    }
    Ok(Tensor::from_parts(shape, out))
}

/// `a · b` for row-major `a: [m, k]` and `b: [k, n]`.
pub(crate) fn matmul_raw<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o = *o + av * bv;
            }
        }
    }
    out
}

/// Matrix product over the trailing axis of `x` and a 2-D `w`.
pub fn matmul<T: Real>(x: &Tensor<T>, w: &Tensor<T>) -> Result<Tensor<T>> {
    if w.ndim() != 2 || x.cols() != w.shape()[0] {
        return Err(shape_err!("cannot multiply {:?} by {:?}", x.shape(), w.shape()));
    }
    let (m, k, n) = (x.rows(), w.shape()[0], w.shape()[1]);
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = n;
    Ok(Tensor::from_parts(shape, matmul_raw(x.data(), w.data(), m, k, n)))
}

fn add_bias<T: Real>(x: &mut Tensor<T>, b: &Tensor<T>) -> Result<()> {
    let c = x.cols();
    if b.len() != c {
        return Err(shape_err!("bias of {} values for width {c}", b.len()));
    }
    for row in x.data_mut().chunks_mut(c) {
        for (v, &bv) in row.iter_mut().zip(b.data()) {
            *v = *v + bv;
        }
    }
    Ok(())
}

/// Two fully connected layers with a ReLU in between: `relu(x·W1 [+b1])·W2 [+b2]`.
pub fn mlp2_forward<T: Real>(
    x: &Tensor<T>,
    w1: &Tensor<T>,
    w2: &Tensor<T>,
    biases: Option<(&Tensor<T>, &Tensor<T>)>,
) -> Result<Tensor<T>> {
    let mut h = matmul(x, w1)?;
    if let Some((b1, _)) = biases {
        add_bias(&mut h, b1)?;
    }
    h.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
    let mut out = matmul(&h, w2)?;
    if let Some((_, b2)) = biases {
        add_bias(&mut out, b2)?;
    }
    Ok(out)
}

/// Mean squared error, optionally restricted to positions where `mask` is 1.
///
/// `mask` covers the leading axes of `x`; each selected position contributes
/// all of its trailing elements.
pub fn mse<T: Real>(x: &Tensor<T>, y: &Tensor<T>, mask: Option<&Tensor<T>>) -> Result<T> {
    if x.shape() != y.shape() {
        return Err(shape_err!("mse operands {:?} and {:?}", x.shape(), y.shape()));
    }
    let Some(mask) = mask else {
        let sum: T = x.data().iter().zip(y.data()).map(|(&a, &b)| (a - b) * (a - b)).sum();
        return Ok(sum / T::lit(x.len() as f64));
    };
    if !x.len().is_multiple_of(mask.len()) || !x.shape().starts_with(mask.shape()) {
        return Err(shape_err!("mask {:?} does not lead {:?}", mask.shape(), x.shape()));
    }
    if mask.data().iter().any(|&m| m != T::zero() && m != T::one()) {
        return Err(arg_err!("mse mask must be binary"));
    }
    let width = x.len() / mask.len();
    let mut sum = T::zero();
    let mut count = 0usize;
    for (p, &m) in mask.data().iter().enumerate() {
        if m == T::one() {
            let xs = &x.data()[p * width..(p + 1) * width];
            let ys = &y.data()[p * width..(p + 1) * width];
            sum = sum + xs.iter().zip(ys).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>();
            count += width;
        }
    }
    if count == 0 {
        return Err(arg_err!("mse mask selects no positions"));
    }
    Ok(sum / T::lit(count as f64))
}

/// Cross entropy `-Σ z_i ln p_i` with `p_i` clamped below at 1e-12.
pub fn cross_entropy<T: Real>(p: &[T], z: &[T]) -> Result<T> {
    if p.len() != z.len() || p.is_empty() {
        return Err(shape_err!("prediction of {} classes, label of {}", p.len(), z.len()));
    }
    let total: T = p.iter().copied().sum();
    if p.iter().any(|&v| v < T::zero()) || (total - T::one()).abs() > T::lit(1e-5) {
        return Err(arg_err!("prediction is not a probability distribution (sum {total})"));
    }
    let ones = z.iter().filter(|&&v| v == T::one()).count();
    let zeros = z.iter().filter(|&&v| v == T::zero()).count();
    if ones != 1 || ones + zeros != z.len() {
        return Err(arg_err!("label is not one-hot"));
    }
    let clamp = T::lit(LOG_CLAMP);
    Ok(-p.iter().zip(z).map(|(&pi, &zi)| zi * pi.max(clamp).ln()).sum::<T>())
}
