use alloc::format;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    pub sample_count: usize,
    /// Lower bound of the relative-error denominator, so that gradients close
    /// to zero are compared in absolute terms.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { epsilon: 1e-5, sample_count: 200, abs_floor: 1e-3, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Probe {
    pub tensor: usize,
    pub element: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub probes: Vec<Probe>,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&Probe> {
        self.probes.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` gradients against central differences
/// `(f(θ+ε) − f(θ−ε)) / 2ε` at `sample_count` randomly chosen scalar
/// parameters and returns the maximum relative error.
pub fn finite_diff_check<F>(
    mut loss_fn: F,
    params: &[Tensor<f64>],
    analytic: &[Tensor<f64>],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: FnMut(&[Tensor<f64>]) -> Result<f64>,
{
    if params.len() != analytic.len() || params.iter().zip(analytic).any(|(p, g)| p.shape() != g.shape()) {
        return Err(shape_err!("analytic gradients do not match parameter shapes"));
    }
    let base = loss_fn(params)?;
    let again = loss_fn(params)?;
    if base.to_bits() != again.to_bits() {
        return Err(Error::GradCheck(format!(
            "loss is not deterministic: {base:e} then {again:e} at identical parameters"
        )));
    }

    let offsets: Vec<usize> = params
        .iter()
        .scan(0, |acc, p| {
            let start = *acc;
            *acc += p.len();
            Some(start)
        })
        .collect();
    let total: usize = params.iter().map(Tensor::len).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let picks = sample(&mut rng, total, cfg.sample_count.min(total));

    let mut work = params.to_vec();
    let mut probes = Vec::with_capacity(picks.len());
    for flat in picks.iter() {
        let tensor = offsets.partition_point(|&o| o <= flat) - 1;
        let element = flat - offsets[tensor];
        let orig = work[tensor].data()[element];

        work[tensor].data_mut()[element] = orig + cfg.epsilon;
        let plus = loss_fn(&work)?;
        work[tensor].data_mut()[element] = orig - cfg.epsilon;
        let minus = loss_fn(&work)?;
        work[tensor].data_mut()[element] = orig;

        let numeric = (plus - minus) / (2.0 * cfg.epsilon);
        let a = analytic[tensor].data()[element];
        probes.push(Probe {
            tensor,
            element,
            analytic: a,
            numeric,
            rel_error: relative_error(a, numeric, cfg.abs_floor),
        });
    }
    let max_rel_error = probes.iter().map(|p| p.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { max_rel_error, probes })
}
