//! Loss bookkeeping and the mask-combination rule.

use alloc::vec;

use serde::{Deserialize, Serialize};

use crate::agnostic::AgnosticMask;
use crate::error::{arg_err, shape_err, Result};
use crate::hard_mask::HardMask;
use crate::numerics::{mse, Tensor};
use crate::real::Real;
use crate::semantic::SemanticMask;
use crate::tokenizer::TokenGrid;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_rec: f64,
    pub l_cls: f64,
    pub l_total: f64,
    pub lambda_rec: f64,
    pub lambda_cls: f64,
}

/// `λ_rec·l_rec + λ_cls·l_cls`.
pub fn total_loss(l_rec: f64, l_cls: f64, lambda_rec: f64, lambda_cls: f64) -> LossReport {
    LossReport { l_rec, l_cls, l_total: lambda_rec * l_rec + lambda_cls * l_cls, lambda_rec, lambda_cls }
}

impl LossReport {
    /// Element-wise mean of several reports.
    pub fn mean(reports: &[LossReport]) -> Option<LossReport> {
        let first = reports.first()?;
        let n = reports.len() as f64;
        let l_rec = reports.iter().map(|r| r.l_rec).sum::<f64>() / n;
        let l_cls = reports.iter().map(|r| r.l_cls).sum::<f64>() / n;
        Some(total_loss(l_rec, l_cls, first.lambda_rec, first.lambda_cls))
    }
}

/// Mean squared error over the masked positions only.
pub fn reconstruction_loss<T: Real>(original: &TokenGrid<T>, reconstructed: &Tensor<T>, m: &HardMask) -> Result<T> {
    let (n_t, n_s) = (original.n_time(), original.n_space());
    if reconstructed.shape() != original.data.shape() {
        return Err(shape_err!("reconstruction {:?} for tokens {:?}", reconstructed.shape(), original.data.shape()));
    }
    if m.n_space != n_s {
        return Err(shape_err!("mask over {} positions for {n_s} patches", m.n_space));
    }
    if m.n_visible() == n_s {
        return Err(arg_err!("no masked positions to reconstruct (ratio 0)"));
    }
    let mut sel = vec![T::zero(); n_t * n_s];
    for p in m.masked_positions(n_t) {
        sel[p] = T::one();
    }
    mse(reconstructed, &original.data, Some(&Tensor::new(vec![n_t, n_s], sel)?))
}

/// `S[t][s][:] = S_agn[t][s][:] · S_sem[t][s]`; a missing factor counts as ones.
/// With neither factor the mask is ones of width `dim`.
pub fn combine_soft_mask<T: Real>(
    s_agn: Option<&AgnosticMask<T>>,
    s_sem: Option<&SemanticMask<T>>,
    n_time: usize,
    n_visible: usize,
    dim: usize,
) -> Result<Tensor<T>> {
    let lead = [n_time, n_visible];
    if let Some(a) = s_agn {
        if a.s_agn.shape() != [n_time, n_visible, dim] {
            return Err(shape_err!("agnostic mask {:?} for [{n_time}, {n_visible}, {dim}]", a.s_agn.shape()));
        }
    }
    if let Some(s) = s_sem {
        if s.s_sem.shape() != lead {
            return Err(shape_err!("semantic mask {:?} for {lead:?}", s.s_sem.shape()));
        }
    }
    let mut out = match s_agn {
        Some(a) => a.s_agn.clone(),
        None => Tensor::full(vec![n_time, n_visible, dim], T::one()),
    };
    if let Some(s) = s_sem {
        for (lane, &w) in out.data_mut().chunks_mut(dim).zip(s.s_sem.data()) {
            lane.iter_mut().for_each(|v| *v = *v * w);
        }
    }
    Ok(out)
}
