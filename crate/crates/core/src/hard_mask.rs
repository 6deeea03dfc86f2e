//! Random spatial hard mask shared by every temporal block.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, shape_err, Result};
use crate::numerics::Tensor;
use crate::real::Real;
use crate::tokenizer::TokenGrid;

/// Number of visible spatial patches: `max(1, floor(n_space · (1 − ratio)))`.
pub fn visible_count(n_space: usize, ratio: f64) -> usize {
    // the small slack keeps exact products such as 100 · (1 − 0.9) from flooring one short
    let kept = Float::floor(n_space as f64 * (1.0 - ratio) + 1e-9) as usize;
    kept.clamp(1, n_space.max(1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardMask {
    pub ratio: f64,
    pub n_space: usize,
    /// Sorted visible spatial indices.
    pub visible_idx: Vec<usize>,
    pub seed: u64,
}

impl HardMask {
    /// Mask that keeps every patch visible.
    pub fn none(n_space: usize) -> Self {
        Self { ratio: 0.0, n_space, visible_idx: (0..n_space).collect(), seed: 0 }
    }

    /// Mask with an explicit visible set.
    pub fn from_visible(n_space: usize, mut visible_idx: Vec<usize>) -> Result<Self> {
        visible_idx.sort_unstable();
        visible_idx.dedup();
        if visible_idx.is_empty() || visible_idx.last().is_some_and(|&i| i >= n_space) {
            return Err(arg_err!("visible indices must be non-empty and below {n_space}"));
        }
        let ratio = 1.0 - visible_idx.len() as f64 / n_space as f64;
        Ok(Self { ratio, n_space, visible_idx, seed: 0 })
    }

    pub fn n_visible(&self) -> usize {
        self.visible_idx.len()
    }

    pub fn is_visible(&self, s: usize) -> bool {
        self.visible_idx.binary_search(&s).is_ok()
    }

    /// Sorted masked spatial indices.
    pub fn masked_idx(&self) -> Vec<usize> {
        (0..self.n_space).filter(|&s| !self.is_visible(s)).collect()
    }

    /// Flat `[time · n_space + space]` grid positions of visible tokens, frame-major.
    pub fn visible_positions(&self, n_time: usize) -> Vec<usize> {
        (0..n_time).flat_map(|t| self.visible_idx.iter().map(move |&s| t * self.n_space + s)).collect()
    }

    /// Flat grid positions of masked tokens, frame-major.
    pub fn masked_positions(&self, n_time: usize) -> Vec<usize> {
        let masked = self.masked_idx();
        (0..n_time).flat_map(|t| masked.iter().map(move |&s| t * self.n_space + s).collect::<Vec<_>>()).collect()
    }
}

/// Draws `visible_count(n_space, ratio)` patches uniformly without replacement.
pub fn sample_hard_mask(n_space: usize, ratio: f64, seed: u64) -> Result<HardMask> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(arg_err!("hard mask ratio must lie in [0, 1), got {ratio}"));
    }
    if n_space == 0 {
        return Err(arg_err!("a grid needs at least one spatial patch"));
    }
    let n_vis = visible_count(n_space, ratio);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut visible_idx = sample(&mut rng, n_space, n_vis).into_vec();
    visible_idx.sort_unstable();
    Ok(HardMask { ratio, n_space, visible_idx, seed })
}

/// Visible tokens `[N_t][n_s][D]`; slot `j` of every frame holds patch `visible_idx[j]`.
pub fn gather_visible<T: Real>(g: &TokenGrid<T>, m: &HardMask) -> Result<Tensor<T>> {
    if m.n_space != g.n_space() {
        return Err(shape_err!("mask over {} patches applied to {} patches", m.n_space, g.n_space()));
    }
    let mut out = Vec::with_capacity(g.n_time() * m.n_visible() * g.dim());
    for t in 0..g.n_time() {
        for &s in &m.visible_idx {
            out.extend_from_slice(g.token(t, s));
        }
    }
    Ok(Tensor::from_parts(vec![g.n_time(), m.n_visible(), g.dim()], out))
}

/// Places visible tokens back on the full grid and fills every masked position
/// with `mask_token`. Positional information is added by the decoder afterwards.
pub fn scatter_with_mask_tokens<T: Real>(
    visible: &Tensor<T>,
    m: &HardMask,
    mask_token: &Tensor<T>,
) -> Result<Tensor<T>> {
    let [n_time, n_vis, dim] = visible.shape() else {
        return Err(shape_err!("visible tokens must be [N_t, n_s, D], got {:?}", visible.shape()));
    };
    let (n_time, n_vis, dim) = (*n_time, *n_vis, *dim);
    if n_vis != m.n_visible() || mask_token.len() != dim {
        return Err(shape_err!(
            "{n_vis} visible slots of width {dim} vs mask of {} and mask token of {}",
            m.n_visible(),
            mask_token.len()
        ));
    }
    let mut out: Vec<T> = mask_token.data().iter().copied().cycle().take(n_time * m.n_space * dim).collect();
    for t in 0..n_time {
        for (j, &s) in m.visible_idx.iter().enumerate() {
            let src = &visible.data()[(t * n_vis + j) * dim..(t * n_vis + j + 1) * dim];
            out[(t * m.n_space + s) * dim..(t * m.n_space + s + 1) * dim].copy_from_slice(src);
        }
    }
    Ok(Tensor::from_parts(vec![n_time, m.n_space, dim], out))
}
