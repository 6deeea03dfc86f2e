//! Soft-mask and distance ablation grids trained under one seed and budget.

use std::path::Path;

use adatosk_core::agnostic::DiffMode;
use adatosk_core::config::{RunConfig, SoftMaskMode};
use adatosk_core::cost::count_cost;
use adatosk_core::semantic::CsScores;
use adatosk_core::synth::Dataset;
use adatosk_core::training::Sequential;
use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::Split;
use crate::parallel::Parallel;
use crate::run::{csv_writer, eval_report, split_examples, train, CurveRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Variant {
    pub name: &'static str,
    pub soft_mask: SoftMaskMode,
    pub cs_scores: CsScores,
    pub diff: DiffMode,
}

impl Variant {
    const fn new(name: &'static str, soft_mask: SoftMaskMode, cs_scores: CsScores, diff: DiffMode) -> Self {
        Self { name, soft_mask, cs_scores, diff }
    }

    pub fn apply(&self, base: &RunConfig) -> RunConfig {
        RunConfig { soft_mask: self.soft_mask, cs_scores: self.cs_scores, diff: self.diff, ..base.clone() }
    }

    /// File-system name: lowercase with runs of other characters folded to `-`.
    pub fn slug(&self) -> String {
        let mut s = String::new();
        for c in self.name.chars() {
            if c.is_ascii_alphanumeric() {
                s.push(c.to_ascii_lowercase());
            } else if !s.ends_with('-') {
                s.push('-');
            }
        }
        s.trim_end_matches('-').to_string()
    }
}

/// Which factor of the soft mask each row keeps, in table order.
pub const SOFT_MASK_GRID: [Variant; 7] = {
    use CsScores::{Accumulated as M, Activation as A, Both as AM};
    use SoftMaskMode::{Agnostic as Ca, Both as CaCs, Semantic as Cs};
    [
        Variant::new("CA", Ca, AM, DiffMode::L1),
        Variant::new("CS(A+M)", Cs, AM, DiffMode::L1),
        Variant::new("CS(M)", Cs, M, DiffMode::L1),
        Variant::new("CS(A)", Cs, A, DiffMode::L1),
        Variant::new("CA+CS(M)", CaCs, M, DiffMode::L1),
        Variant::new("CA+CS(A)", CaCs, A, DiffMode::L1),
        Variant::new("CA+CS(A+M)", CaCs, AM, DiffMode::L1),
    ]
};

/// Frame-difference distance of the class-agnostic mask, full soft mask on.
pub const DISTANCE_GRID: [Variant; 3] = [
    Variant::new("cosine", SoftMaskMode::Both, CsScores::Both, DiffMode::Cosine),
    Variant::new("L2", SoftMaskMode::Both, CsScores::Both, DiffMode::L2),
    Variant::new("L1", SoftMaskMode::Both, CsScores::Both, DiffMode::L1),
];

pub fn full_grid() -> Vec<Variant> {
    SOFT_MASK_GRID.iter().chain(&DISTANCE_GRID).copied().collect()
}

/// One CSV row. Metrics are empty when the variant failed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub seed: u64,
    pub epoch: usize,
    pub uar: Option<f64>,
    pub war: Option<f64>,
    pub l_rec: Option<f64>,
    pub l_cls: Option<f64>,
    pub flops_total: Option<u64>,
    pub params_total: Option<u64>,
    #[serde(skip)]
    pub error: Option<String>,
}

fn run_variant(v: &Variant, base: &RunConfig, data: &Dataset<f32>, out: Option<&Path>) -> Result<AblationRow> {
    let cfg = v.apply(base);
    cfg.validate()?;
    let cost = count_cost(&cfg)?;
    let train_set = split_examples(data, Split::Train, &cfg)?;
    let eval_set = split_examples(data, Split::Eval, &cfg)?;
    let mut curve = match out {
        Some(dir) => Some(csv_writer(&dir.join(v.slug()).join("learning_curve.csv"))?),
        None => None,
    };
    let trainer = train(&cfg, train_set, &Sequential, |_, s| {
        if let Some(w) = curve.as_mut() {
            w.serialize(CurveRow::from(s))?;
        }
        Ok(())
    })?;
    if let Some(mut w) = curve {
        w.flush()?;
    }
    let r = eval_report(&trainer.model, &trainer.params, &eval_set, &cfg)?;
    Ok(AblationRow {
        variant: v.name.to_string(),
        seed: cfg.seed,
        epoch: trainer.epoch,
        uar: Some(r.uar),
        war: Some(r.war),
        l_rec: Some(r.l_rec),
        l_cls: Some(r.l_cls),
        flops_total: Some(cost.flops_total),
        params_total: Some(cost.params_total),
        error: None,
    })
}

/// Trains every variant from the same initialization seed, data and epoch
/// budget, concurrently, and returns rows in grid order. A failing variant
/// leaves its metrics empty and does not stop the others.
pub fn run_ablation(
    variants: &[Variant],
    base: &RunConfig,
    data: &Dataset<f32>,
    engine: &Parallel,
    out: Option<&Path>,
) -> Vec<AblationRow> {
    engine.install(|| {
        variants
            .par_iter()
            .map(|v| {
                run_variant(v, base, data, out).unwrap_or_else(|e| {
                    log::error!("variant {} failed: {e:#}", v.name);
                    AblationRow {
                        variant: v.name.to_string(),
                        seed: base.seed,
                        epoch: 0,
                        uar: None,
                        war: None,
                        l_rec: None,
                        l_cls: None,
                        flops_total: None,
                        params_total: None,
                        error: Some(format!("{e:#}")),
                    }
                })
            })
            .collect()
    })
}

pub fn write_rows(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))
}
