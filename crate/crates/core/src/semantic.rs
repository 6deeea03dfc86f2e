//! Class-semantic similar soft mask.
//!
//! A per-frame masking distribution `M_t` over visible tokens is carried
//! forward in time by a Markov chain whose transition probabilities come from
//! projected token similarities. The `r` highest-scored tokens of a frame are
//! excluded before each transition. The final mask weights `1 − M` by the
//! activation magnitude of each token and is min-max normalized per frame.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, shape_err, Result};
use crate::numerics::ops::{matmul_raw, minmax_in_place, softmax_in_place};
use crate::numerics::Tensor;
use crate::real::Real;

/// Linear projection `f: D → D_f` used for token similarity.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityHead<T> {
    /// `[D, D_f]`
    pub weights: Tensor<T>,
}

impl<T: Real> SimilarityHead<T> {
    pub fn new(weights: Tensor<T>) -> Result<Self> {
        if weights.ndim() != 2 {
            return Err(shape_err!("projection must be [D, D_f], got {:?}", weights.shape()));
        }
        Ok(Self { weights })
    }

    pub fn project(&self, tokens: &[T], rows: usize) -> Result<Vec<T>> {
        let [d, df] = [self.weights.shape()[0], self.weights.shape()[1]];
        if tokens.len() != rows * d {
            return Err(shape_err!("{} values for {rows} tokens of width {d}", tokens.len()));
        }
        Ok(matmul_raw(tokens, self.weights.data(), rows, d, df))
    }
}

/// Which factors feed the class-semantic mask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CsScores {
    /// Activation magnitude only.
    #[serde(rename = "a")]
    Activation,
    /// Accumulated masking probability only.
    #[serde(rename = "m")]
    Accumulated,
    #[default]
    #[serde(rename = "a+m")]
    Both,
}

impl CsScores {
    pub fn name(self) -> &'static str {
        match self {
            CsScores::Activation => "a",
            CsScores::Accumulated => "m",
            CsScores::Both => "a+m",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "a" => Some(CsScores::Activation),
            "m" => Some(CsScores::Accumulated),
            "a+m" => Some(CsScores::Both),
            _ => None,
        }
    }

    pub fn uses_activation(self) -> bool {
        self != CsScores::Accumulated
    }

    pub fn uses_accumulated(self) -> bool {
        self != CsScores::Activation
    }
}

/// Accumulated masking probabilities `[N_t][n_s]`; each row sums to one.
#[derive(Clone, Debug, PartialEq)]
pub struct AccumScores<T> {
    pub m: Tensor<T>,
}

/// Class-semantic soft mask `[N_t][n_s]` in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticMask<T> {
    pub s_sem: Tensor<T>,
}

/// Indices kept after dropping the `r` highest scores (lower index dropped
/// first on ties), in ascending order.
pub fn kept_indices<T: Real>(scores: &[T], r: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b)));
    let mut kept = order.split_off(r.min(scores.len()));
    kept.sort_unstable();
    kept
}

/// Gap between the lowest excluded and the highest kept score; infinite for `r = 0`.
pub fn exclusion_margin<T: Real>(scores: &[T], r: usize) -> f64 {
    if r == 0 || r >= scores.len() {
        return f64::INFINITY;
    }
    let mut sorted: Vec<T> = scores.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
    (sorted[r - 1] - sorted[r]).as_f64()
}

/// Transition `softmax(f(next) · f(prev_kept)ᵀ)`: `[n_s, n_s − r]`.
///
/// The softmax runs over the next-frame tokens, so each column is the
/// distribution over where one kept token's score moves and `P · M′` conserves
/// total mass. Normalizing rows instead would turn `P · M′` into a weighted
/// average that keeps a uniform `M` uniform for every input.
pub fn transition_matrix<T: Real>(
    next_frame: &Tensor<T>,
    prev_kept: &Tensor<T>,
    f: &SimilarityHead<T>,
) -> Result<Tensor<T>> {
    let (n_next, n_prev) = (next_frame.rows(), prev_kept.rows());
    if prev_kept.is_empty() || n_prev == 0 {
        return Err(arg_err!("excluding r tokens must leave at least one token"));
    }
    if next_frame.cols() != prev_kept.cols() {
        return Err(shape_err!("token widths {} and {}", next_frame.cols(), prev_kept.cols()));
    }
    let q = f.project(next_frame.data(), n_next)?;
    let k = f.project(prev_kept.data(), n_prev)?;
    let df = f.weights.shape()[1];
    let mut p = vec![T::zero(); n_next * n_prev];
    let mut col = vec![T::zero(); n_next];
    for j in 0..n_prev {
        for (i, c) in col.iter_mut().enumerate() {
            *c = q[i * df..(i + 1) * df].iter().zip(&k[j * df..(j + 1) * df]).map(|(&a, &b)| a * b).sum();
        }
        softmax_in_place(&mut col);
        for (i, &c) in col.iter().enumerate() {
            p[i * n_prev + j] = c;
        }
    }
    Ok(Tensor::from_parts(vec![n_next, n_prev], p))
}

fn renormalize<T: Real>(v: &mut [T]) {
    let sum: T = v.iter().copied().sum();
    v.iter_mut().for_each(|x| *x = *x / sum);
}

fn frame<T: Real>(visible: &Tensor<T>, t: usize, rows: &[usize]) -> Tensor<T> {
    let (n_s, d) = (visible.shape()[1], visible.shape()[2]);
    let mut out = Vec::with_capacity(rows.len() * d);
    for &s in rows {
        out.extend_from_slice(&visible.data()[(t * n_s + s) * d..(t * n_s + s + 1) * d]);
    }
    Tensor::from_parts(vec![rows.len(), d], out)
}

/// Added to every kept score before renormalizing, so that a chain whose mass
/// sits entirely on excluded tokens falls back towards uniform instead of
/// dividing by zero.
pub const KEPT_FLOOR: f64 = 1e-12;

/// Runs the masking-probability chain across all frames, starting from a
/// uniform distribution.
pub fn accumulate_scores<T: Real>(visible: &Tensor<T>, f: &SimilarityHead<T>, r: usize) -> Result<AccumScores<T>> {
    let [n_t, n_s, _] = visible.shape() else {
        return Err(shape_err!("expected [N_t, n_s, D], got {:?}", visible.shape()));
    };
    let (n_t, n_s) = (*n_t, *n_s);
    if r >= n_s {
        return Err(arg_err!("cannot exclude {r} of {n_s} visible tokens"));
    }
    let all: Vec<usize> = (0..n_s).collect();
    let mut m = vec![T::one() / T::lit(n_s as f64); n_s];
    let mut out = m.clone();
    for t in 0..n_t - 1 {
        let kept = kept_indices(&m, r);
        let mut kept_scores: Vec<T> = kept.iter().map(|&s| m[s] + T::lit(KEPT_FLOOR)).collect();
        renormalize(&mut kept_scores);
        let p = transition_matrix(&frame(visible, t + 1, &all), &frame(visible, t, &kept), f)?;
        m = matmul_raw(p.data(), &kept_scores, n_s, kept.len(), 1);
        renormalize(&mut m);
        out.extend_from_slice(&m);
    }
    Ok(AccumScores { m: Tensor::from_parts(vec![n_t, n_s], out) })
}

/// Sum of absolute activations of one token.
pub fn activation_map<T: Real>(token: &[T]) -> T {
    token.iter().map(|v| v.abs()).sum()
}

/// Un-normalized per-token scores `[N_t][n_s]` for the chosen factors.
pub fn raw_semantic_scores<T: Real>(visible: &Tensor<T>, m: &AccumScores<T>, scores: CsScores) -> Result<Tensor<T>> {
    let [n_t, n_s, d] = visible.shape() else {
        return Err(shape_err!("expected [N_t, n_s, D], got {:?}", visible.shape()));
    };
    if m.m.shape() != [*n_t, *n_s] {
        return Err(shape_err!("scores {:?} for visible tokens {:?}", m.m.shape(), visible.shape()));
    }
    let raw = visible
        .data()
        .chunks(*d)
        .zip(m.m.data())
        .map(|(tok, &mv)| {
            let a = if scores.uses_activation() { activation_map(tok) } else { T::one() };
            let keep = if scores.uses_accumulated() { T::one() - mv } else { T::one() };
            a * keep
        })
        .collect();
    Ok(Tensor::from_parts(vec![*n_t, *n_s], raw))
}

/// `A(x)·(1 − M)` normalized to `[0, 1]` within each frame; constant frames become ones.
pub fn semantic_mask<T: Real>(visible: &Tensor<T>, m: &AccumScores<T>, scores: CsScores) -> Result<SemanticMask<T>> {
    let mut raw = raw_semantic_scores(visible, m, scores)?;
    let n_s = raw.cols();
    raw.data_mut().chunks_mut(n_s).for_each(|row| {
        minmax_in_place(row);
    });
    Ok(SemanticMask { s_sem: raw })
}
