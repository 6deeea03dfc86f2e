//! Run configuration with flat, serde-friendly keys.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::agnostic::{se_hidden, DiffMode};
use crate::error::{arg_err, Result};
use crate::hard_mask::visible_count;
use crate::semantic::CsScores;
use crate::synth::SynthSpec;
use crate::tokenizer::{Geometry, PatchSize, VideoDims};

/// Which soft-mask factors shape the classification branch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SoftMaskMode {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "ca")]
    Agnostic,
    #[serde(rename = "cs")]
    Semantic,
    #[default]
    #[serde(rename = "ca+cs")]
    Both,
}

impl SoftMaskMode {
    pub fn name(self) -> &'static str {
        match self {
            SoftMaskMode::None => "none",
            SoftMaskMode::Agnostic => "ca",
            SoftMaskMode::Semantic => "cs",
            SoftMaskMode::Both => "ca+cs",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(SoftMaskMode::None),
            "ca" => Some(SoftMaskMode::Agnostic),
            "cs" => Some(SoftMaskMode::Semantic),
            "ca+cs" => Some(SoftMaskMode::Both),
            _ => None,
        }
    }

    pub fn agnostic(self) -> bool {
        matches!(self, SoftMaskMode::Agnostic | SoftMaskMode::Both)
    }

    pub fn semantic(self) -> bool {
        matches!(self, SoftMaskMode::Semantic | SoftMaskMode::Both)
    }
}

/// Transformer sizes for the encoder, the one-block decoder and the heads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub layers: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub decoder_dim: usize,
    pub decoder_heads: usize,
    pub decoder_ff_dim: usize,
    pub classifier_hidden: usize,
    /// Output width of the similarity projection.
    pub similarity_dim: usize,
}

impl EncoderConfig {
    pub const DESK: EncoderConfig = EncoderConfig {
        layers: 2,
        model_dim: 64,
        heads: 4,
        ff_dim: 128,
        decoder_dim: 32,
        decoder_heads: 4,
        decoder_ff_dim: 64,
        classifier_hidden: 64,
        similarity_dim: 32,
    };

    /// 12 layers of width 512 with a 384-wide decoder block.
    pub const FULL: EncoderConfig = EncoderConfig {
        layers: 12,
        model_dim: 512,
        heads: 8,
        ff_dim: 2048,
        decoder_dim: 384,
        decoder_heads: 6,
        decoder_ff_dim: 1536,
        classifier_hidden: 512,
        similarity_dim: 256,
    };

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.layers,
            self.model_dim,
            self.heads,
            self.ff_dim,
            self.decoder_dim,
            self.decoder_heads,
            self.decoder_ff_dim,
            self.classifier_hidden,
            self.similarity_dim,
        ];
        if dims.contains(&0) {
            return Err(arg_err!("encoder sizes must be positive: {self:?}"));
        }
        if !self.model_dim.is_multiple_of(self.heads) {
            return Err(arg_err!("model_dim {} is not divisible by {} heads", self.model_dim, self.heads));
        }
        if !self.decoder_dim.is_multiple_of(self.decoder_heads) {
            return Err(arg_err!("decoder_dim {} is not divisible by {} heads", self.decoder_dim, self.decoder_heads));
        }
        Ok(())
    }
}

fn default_warmup() -> Option<usize> {
    None
}

/// Every hyperparameter of a run. Missing JSON keys take the defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub patch_t: usize,
    pub patch_h: usize,
    pub patch_w: usize,

    pub rho: f64,
    pub top_k: usize,
    pub top_r: usize,
    pub mu: usize,
    pub lambda_rec: f64,
    pub lambda_cls: f64,
    pub diff: DiffMode,
    pub soft_mask: SoftMaskMode,
    pub cs_scores: CsScores,
    pub mlp_bias: bool,

    pub layers: usize,
    pub model_dim: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub decoder_dim: usize,
    pub decoder_heads: usize,
    pub decoder_ff_dim: usize,
    pub classifier_hidden: usize,
    pub similarity_dim: Option<usize>,

    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub base_lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default = "default_warmup")]
    pub warmup_epochs: Option<usize>,

    pub class_count: usize,
    pub per_class: usize,
    pub key_frames: Vec<usize>,
    pub noise_sigma: f64,
    pub redundancy_fraction: f64,
    pub step: f64,
    pub amplitude: f64,

    pub seed: u64,
    pub data_seed: u64,
    pub label: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let g = Geometry::DESK;
        let e = EncoderConfig::DESK;
        let s = SynthSpec::default();
        Self {
            frames: g.video.frames,
            height: g.video.height,
            width: g.video.width,
            channels: g.video.channels,
            patch_t: g.patch.t,
            patch_h: g.patch.h,
            patch_w: g.patch.w,
            rho: 0.70,
            top_k: 4,
            top_r: 2,
            mu: 4,
            lambda_rec: 1.0,
            lambda_cls: 0.1,
            diff: DiffMode::L1,
            soft_mask: SoftMaskMode::Both,
            cs_scores: CsScores::Both,
            mlp_bias: false,
            layers: e.layers,
            model_dim: e.model_dim,
            heads: e.heads,
            ff_dim: e.ff_dim,
            decoder_dim: e.decoder_dim,
            decoder_heads: e.decoder_heads,
            decoder_ff_dim: e.decoder_ff_dim,
            classifier_hidden: e.classifier_hidden,
            similarity_dim: None,
            beta1: 0.9,
            beta2: 0.95,
            adam_eps: 1e-8,
            weight_decay: 0.05,
            base_lr: 1.6e-2,
            batch_size: 8,
            epochs: 100,
            warmup_epochs: None,
            class_count: s.class_count,
            per_class: 8,
            key_frames: vec![3],
            noise_sigma: s.noise_sigma,
            redundancy_fraction: s.redundancy_fraction,
            step: s.step,
            amplitude: s.amplitude,
            seed: 0,
            data_seed: 0,
            label: None,
        }
    }
}

impl RunConfig {
    pub fn geometry(&self) -> Geometry {
        Geometry {
            video: VideoDims { frames: self.frames, height: self.height, width: self.width, channels: self.channels },
            patch: PatchSize { t: self.patch_t, h: self.patch_h, w: self.patch_w },
        }
    }

    pub fn set_geometry(&mut self, g: Geometry) {
        self.frames = g.video.frames;
        self.height = g.video.height;
        self.width = g.video.width;
        self.channels = g.video.channels;
        self.patch_t = g.patch.t;
        self.patch_h = g.patch.h;
        self.patch_w = g.patch.w;
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            layers: self.layers,
            model_dim: self.model_dim,
            heads: self.heads,
            ff_dim: self.ff_dim,
            decoder_dim: self.decoder_dim,
            decoder_heads: self.decoder_heads,
            decoder_ff_dim: self.decoder_ff_dim,
            classifier_hidden: self.classifier_hidden,
            similarity_dim: self.similarity_dim.unwrap_or((self.model_dim / 2).max(1)),
        }
    }

    pub fn set_encoder(&mut self, e: EncoderConfig) {
        self.layers = e.layers;
        self.model_dim = e.model_dim;
        self.heads = e.heads;
        self.ff_dim = e.ff_dim;
        self.decoder_dim = e.decoder_dim;
        self.decoder_heads = e.decoder_heads;
        self.decoder_ff_dim = e.decoder_ff_dim;
        self.classifier_hidden = e.classifier_hidden;
        self.similarity_dim = Some(e.similarity_dim);
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            class_count: self.class_count,
            geometry: self.geometry(),
            key_frames: self.key_frames.clone(),
            noise_sigma: self.noise_sigma,
            redundancy_fraction: self.redundancy_fraction,
            step: self.step,
            amplitude: self.amplitude,
            seed: self.data_seed,
        }
    }

    /// Visible patches per temporal block.
    pub fn n_visible(&self) -> usize {
        visible_count(self.geometry().n_space(), self.rho)
    }

    /// Peak learning rate `base_lr · batch_size / 256`.
    pub fn peak_lr(&self) -> f64 {
        self.base_lr * self.batch_size as f64 / 256.0
    }

    /// Warm-up length; one tenth of the epochs unless set.
    pub fn warmup(&self) -> usize {
        self.warmup_epochs.unwrap_or(self.epochs / 10)
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.geometry();
        g.validate()?;
        self.encoder().validate()?;
        if !(0.0..1.0).contains(&self.rho) {
            return Err(arg_err!("rho must lie in [0, 1), got {}", self.rho));
        }
        if g.n_time() < 2 && self.soft_mask != SoftMaskMode::None {
            return Err(arg_err!("soft masks need at least two temporal blocks"));
        }
        if self.top_k == 0 {
            return Err(arg_err!("top_k must be at least 1"));
        }
        if self.soft_mask.semantic() && self.top_r >= self.n_visible() {
            return Err(arg_err!(
                "top_r = {} must be below the {} visible tokens per frame",
                self.top_r,
                self.n_visible()
            ));
        }
        se_hidden(self.model_dim, self.mu)?;
        if self.lambda_rec < 0.0 || self.lambda_cls < 0.0 {
            return Err(arg_err!("loss weights must be non-negative"));
        }
        if self.lambda_rec > 0.0 && self.rho == 0.0 {
            return Err(arg_err!("reconstruction needs masked tokens: rho is 0 but lambda_rec > 0"));
        }
        if self.batch_size == 0 {
            return Err(arg_err!("batch_size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(arg_err!("AdamW betas must lie in [0, 1)"));
        }
        if self.class_count < 2 {
            return Err(arg_err!("classification needs at least two classes"));
        }
        self.synth_spec().validate()
    }
}
