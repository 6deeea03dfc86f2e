#![allow(dead_code)]

use adatosk_core::config::{EncoderConfig, RunConfig};
use adatosk_core::hard_mask::{sample_hard_mask, HardMask};
use adatosk_core::model::{Branches, Model, ModelParams, ModelSpec};
use adatosk_core::tokenizer::{Geometry, PatchSize, TokenGrid, VideoDims};
use adatosk_core::{Real, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 4 frames of 16×16 with 4×4 patches: N_t = 4, N_s = 16, D = 16.
pub const TINY_GEOMETRY: Geometry = Geometry {
    video: VideoDims { frames: 4, height: 16, width: 16, channels: 1 },
    patch: PatchSize { t: 1, h: 4, w: 4 },
};

pub const TINY_ENCODER: EncoderConfig = EncoderConfig {
    layers: 2,
    model_dim: 32,
    heads: 4,
    ff_dim: 64,
    decoder_dim: 16,
    decoder_heads: 2,
    decoder_ff_dim: 32,
    classifier_hidden: 16,
    similarity_dim: 16,
};

/// Six visible tokens per frame, K = 2, r = 2.
pub fn tiny_config() -> RunConfig {
    let mut c = RunConfig { rho: 0.625, top_k: 2, top_r: 2, class_count: 3, ..Default::default() };
    c.set_geometry(TINY_GEOMETRY);
    c.set_encoder(TINY_ENCODER);
    c
}

pub fn tiny_model(cfg: &RunConfig) -> Model {
    Model::new(ModelSpec::from_config(cfg)).unwrap()
}

pub fn tiny_params<T: Real>(cfg: &RunConfig, seed: u64) -> ModelParams<T> {
    ModelParams::init(ModelSpec::from_config(cfg), seed).unwrap()
}

pub fn random_grid<T: Real>(g: Geometry, seed: u64) -> TokenGrid<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = vec![g.n_time(), g.n_space(), g.token_dim()];
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.random::<f64>())).collect();
    TokenGrid::new(g, Tensor::new(shape, data).unwrap()).unwrap()
}

pub fn mask_for(cfg: &RunConfig, seed: u64) -> HardMask {
    sample_hard_mask(cfg.geometry().n_space(), cfg.rho, seed).unwrap()
}

pub fn branches(cfg: &RunConfig) -> Branches {
    Branches::from_config(cfg)
}
