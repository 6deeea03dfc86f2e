//! Per-clip gradients and the optimizer commit.

use alloc::format;
use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{arg_err, Error, Result};
use crate::hard_mask::HardMask;
use crate::model::forward::{Branches, Model};
use crate::model::loss::LossReport;
use crate::model::optim::AdamW;
use crate::model::params::ModelParams;
use crate::real::Real;
use crate::tokenizer::TokenGrid;

/// One clip of a training batch with its hard mask already drawn.
#[derive(Clone, Debug)]
pub struct StepInput<'a, T> {
    pub grid: &'a TokenGrid<T>,
    pub label: usize,
    pub clip_id: usize,
    pub mask: HardMask,
}

pub struct ClipGrads {
    pub clip_id: usize,
    pub grads: Vec<Vec<f64>>,
    pub report: LossReport,
}

const TRAIN_KEY: u64 = 0x7261_696e;
const EVAL_STREAM: u64 = u64::MAX;

fn mask_seed(run_seed: u64, stream: u64, clip_id: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed ^ TRAIN_KEY);
    rng.set_stream(stream);
    rng.set_word_pos(2 * clip_id as u128);
    rng.next_u64()
}

/// Hard-mask seed of a clip in a given epoch; masks are redrawn every epoch.
pub fn train_mask_seed(run_seed: u64, epoch: usize, clip_id: usize) -> u64 {
    mask_seed(run_seed, epoch as u64, clip_id)
}

/// Fixed per-clip hard-mask seed used for evaluation.
pub fn eval_mask_seed(run_seed: u64, clip_id: usize) -> u64 {
    mask_seed(run_seed, EVAL_STREAM, clip_id)
}

/// Forward and backward for one clip, gradients widened to 64-bit.
pub fn clip_gradients<T: Real>(
    model: &Model,
    params: &ModelParams<T>,
    input: &StepInput<T>,
    br: &Branches,
) -> Result<ClipGrads> {
    let tag = |e: Error| match e {
        Error::NonFinite(m) => Error::NonFinite(format!("clip {}: {m}", input.clip_id)),
        other => other,
    };
    let fwd = model.forward(params, input.grid, &input.mask, input.label, br).map_err(tag)?;
    let grads: Vec<Vec<f64>> = fwd.backward().into_iter().map(|g| g.into_iter().map(Real::as_f64).collect()).collect();
    if let Some(i) = grads.iter().position(|g| g.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite(format!("clip {}: gradient of {}", input.clip_id, params.names[i])));
    }
    Ok(ClipGrads { clip_id: input.clip_id, grads, report: fwd.report })
}

/// Averages per-clip gradients in the given order and commits one update.
pub fn apply_gradients<T: Real>(
    params: &mut ModelParams<T>,
    opt: &mut AdamW,
    clips: &[ClipGrads],
    lr: f64,
) -> Result<LossReport> {
    let first = clips.first().ok_or_else(|| arg_err!("empty batch"))?;
    let mut sum = first.grads.clone();
    for c in &clips[1..] {
        for (acc, g) in sum.iter_mut().zip(&c.grads) {
            acc.iter_mut().zip(g).for_each(|(a, &b)| *a += b);
        }
    }
    let n = clips.len() as f64;
    sum.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v /= n));
    opt.update(params, &sum, lr)?;
    let reports: Vec<LossReport> = clips.iter().map(|c| c.report).collect();
    Ok(LossReport::mean(&reports).expect("non-empty batch"))
}

/// Sequential training step over a batch.
pub fn train_step<T: Real>(
    model: &Model,
    params: &mut ModelParams<T>,
    opt: &mut AdamW,
    batch: &[StepInput<T>],
    br: &Branches,
    lr: f64,
) -> Result<LossReport> {
    if batch.is_empty() {
        return Err(arg_err!("empty batch"));
    }
    let clips = batch.iter().map(|b| clip_gradients(model, params, b, br)).collect::<Result<Vec<_>>>()?;
    apply_gradients(params, opt, &clips, lr)
}

/// Predicted class and probabilities, classification branch only.
pub fn predict<T: Real>(
    model: &Model,
    params: &ModelParams<T>,
    grid: &TokenGrid<T>,
    mask: &HardMask,
    br: &Branches,
) -> Result<(usize, Vec<T>)> {
    let br = Branches { lambda_rec: 0.0, ..*br };
    let fwd = model.forward(params, grid, mask, 0, &br)?;
    Ok((fwd.predicted(), fwd.probs))
}
