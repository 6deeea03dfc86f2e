//! Training and evaluation over a stored dataset.

use std::path::Path;

use adatosk_core::config::RunConfig;
use adatosk_core::hard_mask::sample_hard_mask;
use adatosk_core::metrics::{uar_war, ConfusionMatrix};
use adatosk_core::model::{eval_mask_seed, Branches, Model, ModelParams};
use adatosk_core::synth::Dataset;
use adatosk_core::training::{examples, EpochStats, Example, GradientEngine, Trainer};
use anyhow::{ensure, Context, Result};
use serde::Serialize;

use crate::dataset::Split;

/// Tokenized clips of one split, in clip-id order.
pub fn split_examples(data: &Dataset<f32>, split: Split, cfg: &RunConfig) -> Result<Vec<Example<f32>>> {
    let mut ids = match split {
        Split::Train => data.train.clone(),
        Split::Eval => data.eval.clone(),
    };
    ids.sort_unstable();
    Ok(examples(ids.iter().map(|&i| (i, &data.clips[i])), cfg)?)
}

/// Checks that the stored clips fit the model the config describes.
pub fn check_compatible(data: &Dataset<f32>, cfg: &RunConfig) -> Result<()> {
    let clip = data.clips.first().context("dataset has no clips")?;
    ensure!(
        clip.spec.geometry == cfg.geometry(),
        "dataset geometry {:?} differs from the configured {:?}; regenerate data or pass matching geometry",
        clip.spec.geometry,
        cfg.geometry()
    );
    ensure!(
        clip.spec.class_count == cfg.class_count,
        "dataset has {} classes but class_count is {}",
        clip.spec.class_count,
        cfg.class_count
    );
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub uar: f64,
    pub war: f64,
    pub l_rec: f64,
    pub l_cls: f64,
}

/// Predictions and mean losses at each clip's fixed evaluation mask.
pub fn eval_report(
    model: &Model,
    params: &ModelParams<f32>,
    data: &[Example<f32>],
    cfg: &RunConfig,
) -> Result<EvalReport> {
    ensure!(!data.is_empty(), "no clips to evaluate");
    let br = Branches { lambda_rec: 1.0, ..Branches::from_config(cfg) };
    let n_s = cfg.geometry().n_space();
    let mut confusion = ConfusionMatrix::new(cfg.class_count);
    let (mut l_rec, mut l_cls) = (0.0, 0.0);
    for ex in data {
        let mask = sample_hard_mask(n_s, cfg.rho, eval_mask_seed(cfg.seed, ex.id))?;
        let fwd = model.forward(params, &ex.grid, &mask, ex.label, &br).with_context(|| format!("clip {}", ex.id))?;
        confusion.record(ex.label, fwd.predicted());
        l_rec += fwd.report.l_rec;
        l_cls += fwd.report.l_cls;
    }
    let (uar, war) = uar_war(&confusion)?;
    let n = data.len() as f64;
    Ok(EvalReport { confusion, uar, war, l_rec: l_rec / n, l_cls: l_cls / n })
}

/// Runs `cfg.epochs` epochs, reporting each one to `on_epoch`.
pub fn train(
    cfg: &RunConfig,
    train: Vec<Example<f32>>,
    engine: &impl GradientEngine<f32>,
    mut on_epoch: impl FnMut(&Trainer<f32>, &EpochStats) -> Result<()>,
) -> Result<Trainer<f32>> {
    let mut trainer = Trainer::new(cfg.clone(), train)?;
    for _ in 0..cfg.epochs {
        let stats = trainer.run_epoch_with(engine)?;
        on_epoch(&trainer, &stats)?;
    }
    Ok(trainer)
}

#[derive(Debug, Serialize)]
pub struct CurveRow {
    pub epoch: usize,
    pub lr: f64,
    pub l_rec: f64,
    pub l_cls: f64,
    pub l_total: f64,
}

impl From<&EpochStats> for CurveRow {
    fn from(s: &EpochStats) -> Self {
        Self { epoch: s.epoch, lr: s.lr, l_rec: s.loss.l_rec, l_cls: s.loss.l_cls, l_total: s.loss.l_total }
    }
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}
