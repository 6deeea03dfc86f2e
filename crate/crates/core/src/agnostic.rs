//! Class-agnostic dynamic soft mask.
//!
//! Frame-to-frame differences of pooled visible features pick the activated
//! frames; a squeeze-and-excitation style unit enhances each activated frame,
//! and every frame's visible tokens are re-weighted against the enhanced
//! feature of its nearest activated frame.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, shape_err, Result};
use crate::numerics::ops::{matmul_raw, softmax_in_place};
use crate::numerics::Tensor;
use crate::real::Real;

/// Distance between pooled features of neighbouring frames.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiffMode {
    #[default]
    L1,
    L2,
    Cosine,
}

impl DiffMode {
    pub const ALL: [DiffMode; 3] = [DiffMode::Cosine, DiffMode::L2, DiffMode::L1];

    pub fn name(self) -> &'static str {
        match self {
            DiffMode::L1 => "l1",
            DiffMode::L2 => "l2",
            DiffMode::Cosine => "cosine",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "l1" => Some(DiffMode::L1),
            "l2" => Some(DiffMode::L2),
            "cosine" => Some(DiffMode::Cosine),
            _ => None,
        }
    }

    pub fn distance<T: Real>(self, a: &[T], b: &[T]) -> T {
        match self {
            DiffMode::L1 => a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum(),
            DiffMode::L2 => a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt(),
            DiffMode::Cosine => {
                if a == b {
                    return T::zero();
                }
                let dot: T = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
                let na = a.iter().map(|&x| x * x).sum::<T>().sqrt();
                let nb = b.iter().map(|&x| x * x).sum::<T>().sqrt();
                if na == T::zero() || nb == T::zero() {
                    // a zero feature carries no direction; only two zeros count as equal
                    return if na == nb { T::zero() } else { T::one() };
                }
                (T::one() - dot / (na * nb)).max(T::zero())
            }
        }
    }
}

/// `tau[i]` is the difference between frames `i` and `i + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePairDiffs<T> {
    pub tau: Vec<T>,
}

/// Activated frames (0-based, ascending) and the requested count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActivatedSet {
    pub frames: Vec<usize>,
    pub k: usize,
}

impl ActivatedSet {
    /// Activated frame nearest in time to `t`; ties go to the earlier frame.
    pub fn nearest(&self, t: usize) -> usize {
        let mut best = self.frames[0];
        for &f in &self.frames[1..] {
            if f.abs_diff(t) < best.abs_diff(t) {
                best = f;
            }
        }
        best
    }

    /// Position of [`Self::nearest`] within `frames`.
    pub fn nearest_slot(&self, t: usize) -> usize {
        let f = self.nearest(t);
        self.frames.iter().position(|&x| x == f).unwrap()
    }
}

fn split3<T: Real>(x: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match x.shape() {
        [a, b, c] => Ok((*a, *b, *c)),
        s => Err(shape_err!("expected [N_t, n_s, D], got {s:?}")),
    }
}

/// Per-frame average of the visible tokens: `N_t` vectors of length `D`.
pub fn pooled_frames<T: Real>(visible: &Tensor<T>) -> Result<Vec<Vec<T>>> {
    let (n_t, n_s, d) = split3(visible)?;
    let scale = T::one() / T::lit(n_s as f64);
    Ok((0..n_t)
        .map(|t| {
            let mut acc = vec![T::zero(); d];
            for s in 0..n_s {
                let tok = &visible.data()[(t * n_s + s) * d..(t * n_s + s + 1) * d];
                acc.iter_mut().zip(tok).for_each(|(a, &v)| *a = *a + v);
            }
            acc.iter_mut().for_each(|a| *a = *a * scale);
            acc
        })
        .collect())
}

/// Differences between pooled features of each neighbouring frame pair.
pub fn diffs_of_pooled<T: Real>(pooled: &[Vec<T>], mode: DiffMode) -> Result<FramePairDiffs<T>> {
    if pooled.len() < 2 {
        return Err(arg_err!("temporal differences need at least two frames, got {}", pooled.len()));
    }
    Ok(FramePairDiffs { tau: pooled.windows(2).map(|w| mode.distance(&w[0], &w[1])).collect() })
}

pub fn temporal_diff<T: Real>(visible: &Tensor<T>, mode: DiffMode) -> Result<FramePairDiffs<T>> {
    diffs_of_pooled(&pooled_frames(visible)?, mode)
}

/// Pair indices ordered by decreasing difference, earlier pair first on ties.
fn ranked_pairs<T: Real>(tau: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..tau.len()).collect();
    order.sort_by(|&a, &b| tau[b].partial_cmp(&tau[a]).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b)));
    order
}

/// Marks the second frame of each of the `k` largest differences as activated.
/// `k` larger than the number of pairs activates every second frame.
pub fn select_activated<T: Real>(tau: &FramePairDiffs<T>, k: usize) -> Result<ActivatedSet> {
    if k == 0 {
        return Err(arg_err!("top-K needs K >= 1"));
    }
    if tau.tau.is_empty() {
        return Err(arg_err!("no frame pairs to rank"));
    }
    let take = k.min(tau.tau.len());
    let mut frames: Vec<usize> = ranked_pairs(&tau.tau)[..take].iter().map(|&p| p + 1).collect();
    frames.sort_unstable();
    Ok(ActivatedSet { frames, k })
}

/// Gap between the last selected and the first rejected difference;
/// infinite when nothing is rejected.
pub fn selection_margin<T: Real>(tau: &FramePairDiffs<T>, k: usize) -> f64 {
    if k >= tau.tau.len() {
        return f64::INFINITY;
    }
    let order = ranked_pairs(&tau.tau);
    (tau.tau[order[k - 1]] - tau.tau[order[k]]).as_f64()
}

/// Two-layer bottleneck MLP `θ` of the squeeze-and-excitation unit.
#[derive(Clone, Debug, PartialEq)]
pub struct SeUnit<T> {
    /// `[D, D/μ]`
    pub w1: Tensor<T>,
    /// `[D/μ, D]`
    pub w2: Tensor<T>,
    pub biases: Option<(Tensor<T>, Tensor<T>)>,
}

impl<T: Real> SeUnit<T> {
    pub fn new(w1: Tensor<T>, w2: Tensor<T>, biases: Option<(Tensor<T>, Tensor<T>)>) -> Result<Self> {
        let (d, h) = match w1.shape() {
            [d, h] => (*d, *h),
            s => return Err(shape_err!("W1 must be 2-D, got {s:?}")),
        };
        if d % h != 0 {
            return Err(arg_err!("reduction factor does not divide D = {d} (hidden width {h})"));
        }
        if w2.shape() != [h, d] {
            return Err(shape_err!("W2 must be [{h}, {d}], got {:?}", w2.shape()));
        }
        if let Some((b1, b2)) = &biases {
            if b1.len() != h || b2.len() != d {
                return Err(shape_err!("bias widths {} and {} for [{d}, {h}]", b1.len(), b2.len()));
            }
        }
        Ok(Self { w1, w2, biases })
    }

    pub fn dim(&self) -> usize {
        self.w1.shape()[0]
    }
}

/// Checks that `mu` divides `dim` and returns the bottleneck width.
pub fn se_hidden(dim: usize, mu: usize) -> Result<usize> {
    if mu == 0 || !dim.is_multiple_of(mu) {
        return Err(arg_err!("reduction factor {mu} does not divide D = {dim}"));
    }
    Ok(dim / mu)
}

/// `softmax(θ(x̂)) ⊗ x̂ + x̂`.
pub fn se_enhance<T: Real>(x_hat: &[T], unit: &SeUnit<T>) -> Result<Vec<T>> {
    let d = unit.dim();
    if x_hat.len() != d {
        return Err(shape_err!("feature of width {} for an SE unit over {d}", x_hat.len()));
    }
    let h = unit.w1.shape()[1];
    let mut hidden = matmul_raw(x_hat, unit.w1.data(), 1, d, h);
    if let Some((b1, _)) = &unit.biases {
        hidden.iter_mut().zip(b1.data()).for_each(|(v, &b)| *v = *v + b);
    }
    hidden.iter_mut().for_each(|v| *v = v.max(T::zero()));
    let mut gate = matmul_raw(&hidden, unit.w2.data(), 1, h, d);
    if let Some((_, b2)) = &unit.biases {
        gate.iter_mut().zip(b2.data()).for_each(|(v, &b)| *v = *v + b);
    }
    softmax_in_place(&mut gate);
    Ok(gate.iter().zip(x_hat).map(|(&g, &x)| g * x + x).collect())
}

/// Class-agnostic soft weights `[N_t][n_s][D]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AgnosticMask<T> {
    pub s_agn: Tensor<T>,
}

/// `S_agn[t][s] = softmax_D(visible[t][s] ⊗ enhanced[nearest(t)])`.
///
/// `enhanced[j]` belongs to `act.frames[j]`.
pub fn agnostic_mask<T: Real>(visible: &Tensor<T>, act: &ActivatedSet, enhanced: &[Vec<T>]) -> Result<AgnosticMask<T>> {
    let (n_t, n_s, d) = split3(visible)?;
    if act.frames.is_empty() {
        return Err(arg_err!("activated set is empty"));
    }
    if enhanced.len() != act.frames.len() || enhanced.iter().any(|e| e.len() != d) {
        return Err(shape_err!("need one enhanced feature of width {d} per activated frame"));
    }
    if act.frames.iter().any(|&f| f >= n_t) {
        return Err(arg_err!("activated frame out of range for {n_t} frames"));
    }
    let mut out = visible.data().to_vec();
    for t in 0..n_t {
        let e = &enhanced[act.nearest_slot(t)];
        for s in 0..n_s {
            let lane = &mut out[(t * n_s + s) * d..(t * n_s + s + 1) * d];
            lane.iter_mut().zip(e).for_each(|(v, &w)| *v = *v * w);
            softmax_in_place(lane);
        }
    }
    Ok(AgnosticMask { s_agn: Tensor::from_parts(vec![n_t, n_s, d], out) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tau(v: &[f64]) -> FramePairDiffs<f64> {
        FramePairDiffs { tau: v.to_vec() }
    }

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn identical_frames_have_zero_difference() {
        let frame: Vec<f64> = (0..6).map(|i| i as f64 * 0.1).collect();
        let v = Tensor::new(vec![3, 2, 3], [frame.clone(), frame.clone(), frame].concat()).unwrap();
        for mode in DiffMode::ALL {
            assert!(temporal_diff(&v, mode).unwrap().tau.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn pooled_l1_arithmetic() {
        // pooled [1,2] then [4,6]
        let v = Tensor::new(vec![2, 2, 2], vec![0.0, 1.0, 2.0, 3.0, 3.0, 5.0, 5.0, 7.0]).unwrap();
        assert_eq!(temporal_diff(&v, DiffMode::L1).unwrap().tau, vec![7.0]);
        assert_eq!(temporal_diff(&v, DiffMode::L2).unwrap().tau, vec![5.0]);
    }

    #[test]
    fn l1_matches_elementwise_oracle() {
        let v = random(&[5, 3, 4], 9);
        let got = temporal_diff(&v, DiffMode::L1).unwrap();
        for t in 0..4 {
            let mut oracle = 0.0;
            for d in 0..4 {
                let p0: f64 = (0..3).map(|s| v.at(&[t, s, d])).sum::<f64>() / 3.0;
                let p1: f64 = (0..3).map(|s| v.at(&[t + 1, s, d])).sum::<f64>() / 3.0;
                oracle += (p1 - p0).abs();
            }
            assert_abs_diff_eq!(got.tau[t], oracle, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_frame_is_rejected() {
        assert!(temporal_diff(&random(&[1, 2, 2], 1), DiffMode::L1).is_err());
    }

    #[test]
    fn top_k_examples() {
        // pairs (1,2) and (3,4) in 1-based terms -> frames 2 and 4 -> 0-based 1 and 3
        assert_eq!(select_activated(&tau(&[5.0, 1.0, 9.0, 2.0]), 2).unwrap().frames, vec![1, 3]);
        assert_eq!(select_activated(&tau(&[5.0, 1.0, 9.0]), 7).unwrap().frames, vec![1, 2, 3]);
        assert_eq!(select_activated(&tau(&[1.0, 1.0, 1.0]), 1).unwrap().frames, vec![1]);
        assert!(select_activated(&tau(&[1.0]), 0).is_err());
        assert_eq!(selection_margin(&tau(&[5.0, 1.0, 9.0, 2.0]), 2), 3.0);
    }

    #[test]
    fn nearest_activated_prefers_earlier() {
        let act = ActivatedSet { frames: vec![1, 3], k: 2 };
        assert_eq!(act.nearest(0), 1);
        assert_eq!(act.nearest(2), 1);
        assert_eq!(act.nearest(3), 3);
        assert_eq!(act.nearest(5), 3);
    }

    #[test]
    fn se_enhance_cases() {
        let d = 4;
        let zeros = SeUnit::new(Tensor::zeros(vec![d, 2]), Tensor::zeros(vec![2, d]), None).unwrap();
        let x = [0.5, -1.0, 2.0, 0.25];
        let out = se_enhance(&x, &zeros).unwrap();
        for (o, &xi) in out.iter().zip(&x) {
            assert_abs_diff_eq!(*o, xi * (1.0 + 1.0 / d as f64), epsilon = 1e-15);
        }
        let unit = SeUnit::new(random(&[4, 2], 1), random(&[2, 4], 2), None).unwrap();
        assert!(se_enhance(&[0.0; 4], &unit).unwrap().iter().all(|&v| v == 0.0));
        assert!(se_hidden(6, 4).is_err());
        assert!(SeUnit::new(random(&[6, 4], 1), random(&[4, 6], 2), None).is_err());

        // composed oracle: mlp2 -> softmax -> multiply -> add
        let x = [0.3, -0.7, 1.1, 0.9];
        let h: Vec<f64> = (0..2).map(|j| (0..4).map(|i| x[i] * unit.w1.at(&[i, j])).sum::<f64>().max(0.0)).collect();
        let z: Vec<f64> = (0..4).map(|c| (0..2).map(|j| h[j] * unit.w2.at(&[j, c])).sum()).collect();
        let denom: f64 = z.iter().map(|v| v.exp()).sum();
        let out = se_enhance(&x, &unit).unwrap();
        for c in 0..4 {
            assert_abs_diff_eq!(out[c], z[c].exp() / denom * x[c] + x[c], epsilon = 1e-14);
        }
    }

    #[test]
    fn agnostic_mask_cases() {
        let v = Tensor::full(vec![3, 2, 4], 0.7f64);
        let act = ActivatedSet { frames: vec![2], k: 1 };
        let m = agnostic_mask(&v, &act, &[vec![1.5; 4]]).unwrap();
        assert!(m.s_agn.data().iter().all(|&x| (x - 0.25).abs() < 1e-15));
        assert!(agnostic_mask(&v, &act, &[]).is_err());
    }

    #[test]
    fn agnostic_mask_step_by_step_oracle() {
        let v = random(&[3, 2, 4], 21);
        let act = ActivatedSet { frames: vec![1, 2], k: 2 };
        let enhanced = vec![vec![0.5, -1.0, 1.5, 2.0], vec![-0.3, 0.8, 0.1, 1.2]];
        let m = agnostic_mask(&v, &act, &enhanced).unwrap();
        // frame 0 -> nearest activated is 1 (slot 0); frame 1 -> slot 0; frame 2 -> slot 1
        for (t, slot) in [(0, 0), (1, 0), (2, 1)] {
            for s in 0..2 {
                let prod: Vec<f64> = (0..4).map(|d| v.at(&[t, s, d]) * enhanced[slot][d]).collect();
                let max = prod.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let denom: f64 = prod.iter().map(|p| (p - max).exp()).sum();
                for (d, p) in prod.iter().enumerate() {
                    assert_abs_diff_eq!(m.s_agn.at(&[t, s, d]), (p - max).exp() / denom, epsilon = 1e-15);
                }
            }
        }
    }
}
