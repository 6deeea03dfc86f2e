//! Closed-form FLOPs and parameter counts.
//!
//! One multiply-accumulate counts as 2 FLOPs; softmax, layer norm and the
//! other normalizations count 5 FLOPs per element. Bias adds, residual adds,
//! activations and element-wise mask products are not counted.

use serde::{Deserialize, Serialize};

use crate::agnostic::se_hidden;
use crate::config::{EncoderConfig, RunConfig};
use crate::error::Result;

const NORM_FLOPS: u64 = 5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Breakdown {
    pub encoder: u64,
    pub decoder: u64,
    pub soft_ca: u64,
    pub soft_cs: u64,
    pub heads: u64,
}

impl Breakdown {
    pub fn total(&self) -> u64 {
        self.encoder + self.decoder + self.soft_ca + self.soft_cs + self.heads
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub flops_total: u64,
    pub params_total: u64,
    pub flops: Breakdown,
    pub params: Breakdown,
}

/// `n` tokens through a `d_in → d_out` matrix.
pub fn linear_flops(n: u64, d_in: u64, d_out: u64) -> u64 {
    2 * n * d_in * d_out
}

fn linear_params(d_in: u64, d_out: u64) -> u64 {
    d_in * d_out + d_out
}

fn block_flops(n: u64, d: u64, heads: u64, ff: u64) -> u64 {
    let qkv = linear_flops(n, d, 3 * d);
    let scores = 2 * n * n * d;
    let softmax = NORM_FLOPS * heads * n * n;
    let context = 2 * n * n * d;
    let proj = linear_flops(n, d, d);
    let ffn = linear_flops(n, d, ff) + linear_flops(n, ff, d);
    let norms = 2 * NORM_FLOPS * n * d;
    qkv + scores + softmax + context + proj + ffn + norms
}

fn block_params(d: u64, ff: u64) -> u64 {
    2 * d + linear_params(d, 3 * d) + linear_params(d, d) + 2 * d + linear_params(d, ff) + linear_params(ff, d)
}

pub fn count_cost(cfg: &RunConfig) -> Result<CostReport> {
    cfg.validate()?;
    let g = cfg.geometry();
    let e: EncoderConfig = cfg.encoder();
    let (n_t, n_all_s) = (g.n_time() as u64, g.n_space() as u64);
    let n_s = cfg.n_visible() as u64;
    let d = g.token_dim() as u64;
    let (dm, dd) = (e.model_dim as u64, e.decoder_dim as u64);
    let n_vis = n_t * n_s;
    let n_all = n_t * n_all_s;
    let classes = cfg.class_count as u64;
    let hidden = se_hidden(e.model_dim, cfg.mu)? as u64;
    let df = e.similarity_dim as u64;
    let r = cfg.top_r as u64;

    let mut flops = Breakdown {
        encoder: linear_flops(n_vis, d, dm)
            + e.layers as u64 * block_flops(n_vis, dm, e.heads as u64, e.ff_dim as u64)
            + NORM_FLOPS * n_vis * dm,
        ..Default::default()
    };
    if cfg.lambda_rec > 0.0 {
        flops.decoder = linear_flops(n_vis, dm, dd)
            + block_flops(n_all, dd, e.decoder_heads as u64, e.decoder_ff_dim as u64)
            + NORM_FLOPS * n_all * dd
            + linear_flops(n_all, dd, d);
    }
    if cfg.soft_mask.agnostic() {
        let k = (cfg.top_k as u64).min(n_t - 1);
        let pool = n_vis * dm;
        let diffs = 2 * (n_t - 1) * dm;
        let se = k * (linear_flops(1, dm, hidden) + linear_flops(1, hidden, dm) + NORM_FLOPS * dm);
        let mask = NORM_FLOPS * n_vis * dm;
        flops.soft_ca = pool + diffs + se + mask;
    }
    if cfg.soft_mask.semantic() {
        let kept = n_s - r;
        let project = linear_flops(n_vis, dm, df);
        let per_step = 2 * n_s * kept * df + NORM_FLOPS * n_s * kept + 2 * n_s * kept + NORM_FLOPS * (kept + n_s);
        let activation = if cfg.cs_scores.uses_activation() { n_vis * dm } else { 0 };
        flops.soft_cs = project + (n_t - 1) * per_step + activation + NORM_FLOPS * n_vis;
    }
    flops.heads = n_vis * dm
        + NORM_FLOPS * dm
        + linear_flops(1, dm, e.classifier_hidden as u64)
        + linear_flops(1, e.classifier_hidden as u64, classes)
        + NORM_FLOPS * classes;

    let params = Breakdown {
        encoder: linear_params(d, dm) + e.layers as u64 * block_params(dm, e.ff_dim as u64) + 2 * dm,
        decoder: linear_params(dm, dd) + dd + block_params(dd, e.decoder_ff_dim as u64) + 2 * dd + linear_params(dd, d),
        soft_ca: 2 * dm * hidden + if cfg.mlp_bias { hidden + dm } else { 0 },
        soft_cs: dm * df,
        heads: 2 * dm
            + linear_params(dm, e.classifier_hidden as u64)
            + linear_params(e.classifier_hidden as u64, classes),
    };
    Ok(CostReport { flops_total: flops.total(), params_total: params.total(), flops, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelParams, ModelSpec};
    use crate::tokenizer::Geometry;

    fn full(rho: f64, r: usize) -> RunConfig {
        let mut c = RunConfig { rho, top_r: r, class_count: 7, ..Default::default() };
        c.set_geometry(Geometry::FULL);
        c.set_encoder(EncoderConfig::FULL);
        c
    }

    #[test]
    fn linear_convention() {
        assert_eq!(linear_flops(2, 4, 3), 48);
    }

    #[test]
    fn parameter_count_matches_model() {
        for bias in [false, true] {
            let cfg = RunConfig { mlp_bias: bias, ..Default::default() };
            let p = ModelParams::<f32>::init(ModelSpec::from_config(&cfg), 0).unwrap();
            assert_eq!(count_cost(&cfg).unwrap().params_total, p.count() as u64);
        }
    }

    #[test]
    fn cost_falls_with_ratio_and_exclusion() {
        let a = count_cost(&full(0.25, 2)).unwrap().flops_total;
        let b = count_cost(&full(0.50, 2)).unwrap().flops_total;
        let c = count_cost(&full(0.70, 2)).unwrap().flops_total;
        assert!(a > b && b > c, "{a} {b} {c}");
        let r0 = count_cost(&full(0.50, 0)).unwrap();
        let r2 = count_cost(&full(0.50, 2)).unwrap();
        assert!(r0.flops_total > r2.flops_total);
        assert!(r0.flops.soft_cs > r2.flops.soft_cs);
        assert_eq!(r0.flops.encoder, r2.flops.encoder);
    }

    #[test]
    fn breakdown_sums_to_total() {
        let c = count_cost(&RunConfig::default()).unwrap();
        assert_eq!(c.flops.total(), c.flops_total);
        assert_eq!(c.params.total(), c.params_total);
    }
}
