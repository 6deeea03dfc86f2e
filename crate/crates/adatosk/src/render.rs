//! Soft-mask dumps and heatmap files for single clips.

use std::fs;
use std::path::Path;

use adatosk_core::config::RunConfig;
use adatosk_core::hard_mask::{sample_hard_mask, HardMask};
use adatosk_core::heatmap::{render_heatmaps, Image};
use adatosk_core::model::{eval_mask_seed, Branches, Model, ModelParams, SoftMaskState};
use adatosk_core::synth::LabeledClip;
use adatosk_core::tokenizer::tokenize;
use anyhow::{bail, Context, Result};
use serde::Serialize;

use crate::dump::{write_raw, write_tensor};
use crate::run::write_json;

pub fn write_images(dir: &Path, images: &[Image]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for img in images {
        let path = dir.join(format!("{}.{}", img.name, img.extension()));
        fs::write(&path, img.encode()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct MaskSummary<'a> {
    clip: usize,
    label: usize,
    predicted: usize,
    probs: &'a [f32],
    hard_mask: &'a HardMask,
    activated_frames: Option<&'a [usize]>,
}

/// Every soft-mask tensor of the state, as tensor dumps under `dir`.
pub fn dump_state(dir: &Path, s: &SoftMaskState<f32>) -> Result<()> {
    if let Some(tau) = &s.tau {
        write_raw(&dir.join("tau"), &[tau.len()], tau)?;
    }
    for (name, t) in [("s_agn", &s.s_agn), ("accum", &s.accum), ("activation", &s.activation), ("s_sem", &s.s_sem)] {
        if let Some(t) = t {
            write_tensor(&dir.join(name), t)?;
        }
    }
    write_tensor(&dir.join("combined"), &s.combined)
}

/// Runs one clip through its evaluation mask, dumps the soft-mask state and
/// renders heatmaps into `dir`.
pub fn clip_masks(
    dir: &Path,
    model: &Model,
    params: &ModelParams<f32>,
    cfg: &RunConfig,
    id: usize,
    clip: &LabeledClip<f32>,
) -> Result<()> {
    let g = cfg.geometry();
    let grid = tokenize(&clip.volume, g.patch)?;
    let mask = sample_hard_mask(g.n_space(), cfg.rho, eval_mask_seed(cfg.seed, id))?;
    let br = Branches { lambda_rec: 0.0, ..Branches::from_config(cfg) };
    let fwd = model.forward(params, &grid, &mask, clip.label, &br).with_context(|| format!("clip {id}"))?;
    let Some(state) = &fwd.masks else {
        bail!("soft_mask is none, so there are no masks to dump; pick ca, cs or ca+cs");
    };
    dump_state(dir, state)?;
    write_json(
        &dir.join("summary.json"),
        &MaskSummary {
            clip: id,
            label: clip.label,
            predicted: fwd.predicted(),
            probs: &fwd.probs,
            hard_mask: &mask,
            activated_frames: state.activated.as_ref().map(|a| a.frames.as_slice()),
        },
    )?;
    let images = render_heatmaps(g, &clip.volume, &mask, state)?;
    write_images(&dir.join("heatmaps"), &images)
}
