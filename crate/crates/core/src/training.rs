//! Epoch loop over a fixed training set and evaluation over a clip list.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{arg_err, Result};
use crate::hard_mask::sample_hard_mask;
use crate::metrics::ConfusionMatrix;
use crate::model::{
    apply_gradients, clip_gradients, eval_mask_seed, predict, train_mask_seed, AdamW, Branches, ClipGrads, LossReport,
    LrSchedule, Model, ModelParams, ModelSpec, StepInput,
};
use crate::real::Real;
use crate::synth::LabeledClip;
use crate::tokenizer::{tokenize, TokenGrid};

/// A tokenized clip with its dataset-wide id.
#[derive(Clone, Debug)]
pub struct Example<T> {
    pub id: usize,
    pub label: usize,
    pub grid: TokenGrid<T>,
}

/// Tokenizes clips, keeping `ids[i]` as the id of `clips[i]`.
pub fn examples<'a, T: Real + 'a>(
    clips: impl IntoIterator<Item = (usize, &'a LabeledClip<T>)>,
    cfg: &RunConfig,
) -> Result<Vec<Example<T>>> {
    let patch = cfg.geometry().patch;
    clips.into_iter().map(|(id, c)| Ok(Example { id, label: c.label, grid: tokenize(&c.volume, patch)? })).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub loss: LossReport,
}

/// Computes per-clip gradients for one batch; results must keep batch order.
pub trait GradientEngine<T> {
    fn gradients(
        &self,
        model: &Model,
        params: &ModelParams<T>,
        batch: &[StepInput<T>],
        br: &Branches,
    ) -> Result<Vec<ClipGrads>>;
}

/// One clip after another on the calling thread.
pub struct Sequential;

impl<T: Real> GradientEngine<T> for Sequential {
    fn gradients(
        &self,
        model: &Model,
        params: &ModelParams<T>,
        batch: &[StepInput<T>],
        br: &Branches,
    ) -> Result<Vec<ClipGrads>> {
        batch.iter().map(|b| clip_gradients(model, params, b, br)).collect()
    }
}

pub struct Trainer<T> {
    pub cfg: RunConfig,
    pub model: Model,
    pub params: ModelParams<T>,
    pub opt: AdamW,
    pub schedule: LrSchedule,
    pub branches: Branches,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimizer steps.
    pub step: usize,
    data: Vec<Example<T>>,
}

impl<T: Real> Trainer<T> {
    pub fn new(cfg: RunConfig, data: Vec<Example<T>>) -> Result<Self> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(arg_err!("no training clips"));
        }
        let spec = ModelSpec::from_config(&cfg);
        let params = ModelParams::init(spec, cfg.seed)?;
        Self::resume(cfg, data, params, 0)
    }

    /// Continues from given parameters; optimizer moments restart at zero.
    pub fn resume(cfg: RunConfig, data: Vec<Example<T>>, params: ModelParams<T>, epoch: usize) -> Result<Self> {
        cfg.validate()?;
        let model = Model::new(params.spec)?;
        let steps = Self::steps_per_epoch_of(&cfg, data.len());
        let opt = AdamW::from_config(&params, &cfg);
        Ok(Self {
            schedule: LrSchedule::from_config(&cfg, steps),
            branches: Branches::from_config(&cfg),
            cfg,
            model,
            params,
            opt,
            epoch,
            step: epoch * steps,
            data,
        })
    }

    fn steps_per_epoch_of(cfg: &RunConfig, n: usize) -> usize {
        n.div_ceil(cfg.batch_size)
    }

    pub fn steps_per_epoch(&self) -> usize {
        Self::steps_per_epoch_of(&self.cfg, self.data.len())
    }

    pub fn data(&self) -> &[Example<T>] {
        &self.data
    }

    /// Shuffled visiting order of the training clips for an epoch.
    fn order(&self, epoch: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        let mut order: Vec<usize> = (0..self.data.len()).collect();
        order.shuffle(&mut rng);
        order
    }

    pub fn run_epoch_with(&mut self, engine: &impl GradientEngine<T>) -> Result<EpochStats> {
        let epoch = self.epoch;
        let n_s = self.cfg.geometry().n_space();
        let order = self.order(epoch);
        let mut reports = Vec::with_capacity(order.len());
        let mut lr = 0.0;
        for chunk in order.chunks(self.cfg.batch_size) {
            let batch = chunk
                .iter()
                .map(|&i| {
                    let ex = &self.data[i];
                    let mask = sample_hard_mask(n_s, self.cfg.rho, train_mask_seed(self.cfg.seed, epoch, ex.id))?;
                    Ok(StepInput { grid: &ex.grid, label: ex.label, clip_id: ex.id, mask })
                })
                .collect::<Result<Vec<_>>>()?;
            let grads = engine.gradients(&self.model, &self.params, &batch, &self.branches)?;
            lr = self.schedule.lr(self.step);
            apply_gradients(&mut self.params, &mut self.opt, &grads, lr)?;
            reports.extend(grads.iter().map(|g| g.report));
            self.step += 1;
        }
        self.epoch += 1;
        Ok(EpochStats { epoch: self.epoch, lr, loss: LossReport::mean(&reports).expect("non-empty data") })
    }

    pub fn run_epoch(&mut self) -> Result<EpochStats> {
        self.run_epoch_with(&Sequential)
    }
}

/// Classifies each example through its fixed evaluation mask.
pub fn evaluate<T: Real>(
    model: &Model,
    params: &ModelParams<T>,
    data: &[Example<T>],
    cfg: &RunConfig,
) -> Result<ConfusionMatrix> {
    let br = Branches::from_config(cfg);
    let n_s = cfg.geometry().n_space();
    let mut cm = ConfusionMatrix::new(cfg.class_count);
    for ex in data {
        let mask = sample_hard_mask(n_s, cfg.rho, eval_mask_seed(cfg.seed, ex.id))?;
        let (pred, _) = predict(model, params, &ex.grid, &mask, &br)?;
        cm.record(ex.label, pred);
    }
    Ok(cm)
}

/// Mean reconstruction loss over examples at their evaluation masks.
pub fn reconstruction_error<T: Real>(
    model: &Model,
    params: &ModelParams<T>,
    data: &[Example<T>],
    cfg: &RunConfig,
) -> Result<f64> {
    let br = Branches { lambda_rec: 1.0, ..Branches::from_config(cfg) };
    let n_s = cfg.geometry().n_space();
    let mut sum = 0.0;
    for ex in data {
        let mask = sample_hard_mask(n_s, cfg.rho, eval_mask_seed(cfg.seed, ex.id))?;
        sum += model.forward(params, &ex.grid, &mask, ex.label, &br)?.report.l_rec;
    }
    Ok(sum / data.len() as f64)
}
