//! AdamW with decoupled weight decay and the warm-up/cosine schedule.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{shape_err, Result};
use crate::model::params::ModelParams;
use crate::real::Real;

/// Linear warm-up to `peak`, then cosine decay to zero at `total_steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub peak: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl LrSchedule {
    pub fn from_config(cfg: &RunConfig, steps_per_epoch: usize) -> Self {
        Self {
            peak: cfg.peak_lr(),
            warmup_steps: cfg.warmup() * steps_per_epoch,
            total_steps: cfg.epochs * steps_per_epoch,
        }
    }

    pub fn lr(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.peak * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.total_steps.saturating_sub(self.warmup_steps).max(1);
        let progress = ((step - self.warmup_steps) as f64 / span as f64).min(1.0);
        self.peak * 0.5 * (1.0 + Float::cos(core::f64::consts::PI * progress))
    }
}

/// Moment estimates kept in 64-bit regardless of the parameter precision.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new<T: Real>(params: &ModelParams<T>, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors.iter().map(|t| vec![0.0; t.len()]).collect();
        Self { beta1, beta2, eps, weight_decay, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn from_config<T: Real>(params: &ModelParams<T>, cfg: &RunConfig) -> Self {
        Self::new(params, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay)
    }

    /// One update with gradients aligned to `params.tensors`.
    pub fn update<T: Real>(&mut self, params: &mut ModelParams<T>, grads: &[Vec<f64>], lr: f64) -> Result<()> {
        if grads.len() != params.tensors.len() {
            return Err(shape_err!("{} gradients for {} parameters", grads.len(), params.tensors.len()));
        }
        self.step += 1;
        let bc1 = 1.0 - Float::powi(self.beta1, self.step as i32);
        let bc2 = 1.0 - Float::powi(self.beta2, self.step as i32);
        for (i, grad) in grads.iter().enumerate() {
            let decay = if params.decays(i) { self.weight_decay } else { 0.0 };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let data = params.tensors[i].data_mut();
            if grad.len() != data.len() {
                return Err(shape_err!("gradient of length {} for parameter of length {}", grad.len(), data.len()));
            }
            for (j, &g) in grad.iter().enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let step = (m[j] / bc1) / (Float::sqrt(v[j] / bc2) + self.eps) + decay * data[j].as_f64();
                data[j] = T::lit(data[j].as_f64() - lr * step);
            }
        }
        Ok(())
    }

    /// First and second moments, for checkpointing.
    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.m, &self.v)
    }
}
