//! Data-parallel gradients on a rayon pool.

use adatosk_core::model::{clip_gradients, Branches, ClipGrads, Model, ModelParams, StepInput};
use adatosk_core::training::GradientEngine;
use adatosk_core::Real;
use anyhow::{Context, Result};
use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

pub const THREADS_VAR: &str = "ADATOSK_THREADS";

/// Thread cap from `ADATOSK_THREADS`, if set.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_VAR) {
        Ok(v) => {
            let n: usize = v.trim().parse().with_context(|| format!("{THREADS_VAR}={v:?} is not a thread count"))?;
            anyhow::ensure!(n > 0, "{THREADS_VAR} must be at least 1");
            Ok(Some(n))
        }
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(e).context(THREADS_VAR),
    }
}

pub fn pool(threads: Option<usize>) -> Result<ThreadPool> {
    let mut b = ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n);
    }
    b.build().context("starting thread pool")
}

/// Per-clip gradients computed concurrently. Results come back in batch order,
/// so the summed update is bit-identical to [`adatosk_core::training::Sequential`].
pub struct Parallel {
    pool: ThreadPool,
}

impl Parallel {
    pub fn new(threads: Option<usize>) -> Result<Self> {
        Ok(Self { pool: pool(threads)? })
    }

    pub fn from_env() -> Result<Self> {
        Self::new(thread_cap()?)
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }
}

impl<T: Real> GradientEngine<T> for Parallel {
    fn gradients(
        &self,
        model: &Model,
        params: &ModelParams<T>,
        batch: &[StepInput<T>],
        br: &Branches,
    ) -> adatosk_core::Result<Vec<ClipGrads>> {
        self.pool.install(|| batch.par_iter().map(|b| clip_gradients(model, params, b, br)).collect())
    }
}
