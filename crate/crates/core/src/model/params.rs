//! Named learnable tensors and their deterministic initialization.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::agnostic::se_hidden;
use crate::config::{EncoderConfig, RunConfig};
use crate::error::{arg_err, shape_err, Result};
use crate::numerics::Tensor;
use crate::real::Real;
use crate::tokenizer::Geometry;

/// Everything that fixes the parameter shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub geometry: Geometry,
    pub encoder: EncoderConfig,
    pub mu: usize,
    pub mlp_bias: bool,
    pub class_count: usize,
}

impl ModelSpec {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            geometry: cfg.geometry(),
            encoder: cfg.encoder(),
            mu: cfg.mu,
            mlp_bias: cfg.mlp_bias,
            class_count: cfg.class_count,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.encoder.validate()?;
        se_hidden(self.encoder.model_dim, self.mu)?;
        if self.class_count < 2 {
            return Err(arg_err!("need at least two classes"));
        }
        Ok(())
    }
}

/// Indices of one pre-norm transformer block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockIdx {
    pub ln1_g: usize,
    pub ln1_b: usize,
    /// Fused query/key/value projection `[dim, 3·dim]`.
    pub qkv_w: usize,
    pub qkv_b: usize,
    pub proj_w: usize,
    pub proj_b: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub ff1_w: usize,
    pub ff1_b: usize,
    pub ff2_w: usize,
    pub ff2_b: usize,
}

/// Where each parameter lives inside [`ModelParams::tensors`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub embed_w: usize,
    pub embed_b: usize,
    pub encoder: Vec<BlockIdx>,
    pub enc_norm_g: usize,
    pub enc_norm_b: usize,
    pub dec_embed_w: usize,
    pub dec_embed_b: usize,
    pub mask_token: usize,
    pub decoder: BlockIdx,
    pub dec_norm_g: usize,
    pub dec_norm_b: usize,
    pub dec_out_w: usize,
    pub dec_out_b: usize,
    pub se_w1: usize,
    pub se_w2: usize,
    pub se_b: Option<(usize, usize)>,
    pub sim_w: usize,
    pub cls_norm_g: usize,
    pub cls_norm_b: usize,
    pub cls_w1: usize,
    pub cls_b1: usize,
    pub cls_w2: usize,
    pub cls_b2: usize,
}

#[derive(Clone, Copy)]
enum Init {
    Xavier,
    Zeros,
    Ones,
    Normal(f64),
}

struct Builder {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    inits: Vec<Init>,
}

impl Builder {
    fn add(&mut self, name: String, shape: &[usize], init: Init) -> usize {
        self.names.push(name);
        self.shapes.push(shape.to_vec());
        self.inits.push(init);
        self.names.len() - 1
    }

    fn linear(&mut self, prefix: &str, d_in: usize, d_out: usize) -> (usize, usize) {
        (
            self.add(format!("{prefix}.weight"), &[d_in, d_out], Init::Xavier),
            self.add(format!("{prefix}.bias"), &[d_out], Init::Zeros),
        )
    }

    fn norm(&mut self, prefix: &str, d: usize) -> (usize, usize) {
        (self.add(format!("{prefix}.gain"), &[d], Init::Ones), self.add(format!("{prefix}.shift"), &[d], Init::Zeros))
    }

    fn block(&mut self, prefix: &str, d: usize, ff: usize) -> BlockIdx {
        let (ln1_g, ln1_b) = self.norm(&format!("{prefix}.norm1"), d);
        let (qkv_w, qkv_b) = self.linear(&format!("{prefix}.qkv"), d, 3 * d);
        let (proj_w, proj_b) = self.linear(&format!("{prefix}.proj"), d, d);
        let (ln2_g, ln2_b) = self.norm(&format!("{prefix}.norm2"), d);
        let (ff1_w, ff1_b) = self.linear(&format!("{prefix}.ff1"), d, ff);
        let (ff2_w, ff2_b) = self.linear(&format!("{prefix}.ff2"), ff, d);
        BlockIdx { ln1_g, ln1_b, qkv_w, qkv_b, proj_w, proj_b, ln2_g, ln2_b, ff1_w, ff1_b, ff2_w, ff2_b }
    }
}

fn build(spec: &ModelSpec) -> (Builder, Layout) {
    let e = &spec.encoder;
    let d = spec.geometry.token_dim();
    let dm = e.model_dim;
    let dd = e.decoder_dim;
    let mut b = Builder { names: Vec::new(), shapes: Vec::new(), inits: Vec::new() };

    let (embed_w, embed_b) = b.linear("embed", d, dm);
    let encoder = (0..e.layers).map(|l| b.block(&format!("encoder.{l}"), dm, e.ff_dim)).collect();
    let (enc_norm_g, enc_norm_b) = b.norm("encoder.norm", dm);

    let (dec_embed_w, dec_embed_b) = b.linear("decoder.embed", dm, dd);
    let mask_token = b.add("decoder.mask_token".into(), &[dd], Init::Normal(0.02));
    let decoder = b.block("decoder.0", dd, e.decoder_ff_dim);
    let (dec_norm_g, dec_norm_b) = b.norm("decoder.norm", dd);
    let (dec_out_w, dec_out_b) = b.linear("decoder.out", dd, d);

    let hidden = dm / spec.mu;
    let se_w1 = b.add("se.w1".into(), &[dm, hidden], Init::Xavier);
    let se_w2 = b.add("se.w2".into(), &[hidden, dm], Init::Xavier);
    let se_b = spec
        .mlp_bias
        .then(|| (b.add("se.b1".into(), &[hidden], Init::Zeros), b.add("se.b2".into(), &[dm], Init::Zeros)));
    let sim_w = b.add("similarity.weight".into(), &[dm, e.similarity_dim], Init::Xavier);

    let (cls_norm_g, cls_norm_b) = b.norm("head.norm", dm);
    let (cls_w1, cls_b1) = b.linear("head.fc1", dm, e.classifier_hidden);
    let (cls_w2, cls_b2) = b.linear("head.fc2", e.classifier_hidden, spec.class_count);

    let layout = Layout {
        embed_w,
        embed_b,
        encoder,
        enc_norm_g,
        enc_norm_b,
        dec_embed_w,
        dec_embed_b,
        mask_token,
        decoder,
        dec_norm_g,
        dec_norm_b,
        dec_out_w,
        dec_out_b,
        se_w1,
        se_w2,
        se_b,
        sim_w,
        cls_norm_g,
        cls_norm_b,
        cls_w1,
        cls_b1,
        cls_w2,
        cls_b2,
    };
    (b, layout)
}

/// All learnable tensors, in a fixed order, with their names.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub spec: ModelSpec,
    pub layout: Layout,
    pub names: Vec<String>,
    pub tensors: Vec<Tensor<T>>,
    pub seed: u64,
}

impl<T: Real> ModelParams<T> {
    /// Xavier-uniform matrices, zero biases, unit norm gains and a mask
    /// token drawn from `N(0, 0.02²)`, all from one seeded stream.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let (b, layout) = build(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = b
            .shapes
            .iter()
            .zip(&b.inits)
            .map(|(shape, init)| {
                let n: usize = shape.iter().product();
                let data: Vec<T> = match *init {
                    Init::Zeros => (0..n).map(|_| T::zero()).collect(),
                    Init::Ones => (0..n).map(|_| T::one()).collect(),
                    Init::Xavier => {
                        let a = Float::sqrt(6.0 / (shape[0] + shape[1]) as f64);
                        (0..n).map(|_| T::lit(rng.random_range(-a..a))).collect()
                    }
                    Init::Normal(sd) => {
                        let dist = Normal::new(0.0, sd).expect("positive deviation");
                        (0..n).map(|_| T::lit(dist.sample(&mut rng))).collect()
                    }
                };
                Tensor::from_parts(shape.clone(), data)
            })
            .collect();
        Ok(Self { spec, layout, names: b.names, tensors, seed })
    }

    /// Rebuilds a parameter set from named tensors, checking names and shapes.
    pub fn from_tensors(spec: ModelSpec, seed: u64, named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        spec.validate()?;
        let (b, layout) = build(&spec);
        if named.len() != b.names.len() {
            return Err(shape_err!("expected {} parameters, got {}", b.names.len(), named.len()));
        }
        let mut tensors = Vec::with_capacity(named.len());
        for ((name, t), (want, shape)) in named.into_iter().zip(b.names.iter().zip(&b.shapes)) {
            if &name != want || t.shape() != shape.as_slice() {
                return Err(shape_err!("parameter {name} {:?} where {want} {shape:?} was expected", t.shape()));
            }
            if !t.is_finite() {
                return Err(crate::Error::NonFinite(format!("parameter {name}")));
            }
            tensors.push(t);
        }
        Ok(Self { spec, layout, names: b.names, tensors, seed })
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Weight decay applies to matrices only, not to biases, gains or the mask token.
    pub fn decays(&self, i: usize) -> bool {
        self.tensors[i].ndim() == 2
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            spec: self.spec,
            layout: self.layout.clone(),
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            seed: self.seed,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::Geometry;
    use alloc::vec;

    fn spec() -> ModelSpec {
        ModelSpec { geometry: Geometry::DESK, encoder: EncoderConfig::DESK, mu: 4, mlp_bias: false, class_count: 3 }
    }

    #[test]
    fn init_is_deterministic_and_seed_dependent() {
        let a = ModelParams::<f32>::init(spec(), 5).unwrap();
        let b = ModelParams::<f32>::init(spec(), 5).unwrap();
        let c = ModelParams::<f32>::init(spec(), 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.tensors, c.tensors);
        assert!(a.is_finite());
    }

    #[test]
    fn names_are_unique_and_shapes_match_layout() {
        let p = ModelParams::<f64>::init(spec(), 0).unwrap();
        let mut names = p.names.clone();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), p.names.len());
        assert_eq!(p.tensors[p.layout.embed_w].shape(), [128, 64]);
        assert_eq!(p.tensors[p.layout.se_w1].shape(), [64, 16]);
        assert_eq!(p.tensors[p.layout.mask_token].shape(), [32]);
        assert_eq!(p.tensors[p.layout.cls_w2].shape(), [64, 3]);
        assert!(p.layout.se_b.is_none());
    }

    #[test]
    fn bias_flag_adds_se_biases() {
        let mut s = spec();
        s.mlp_bias = true;
        let p = ModelParams::<f64>::init(s, 0).unwrap();
        let base = ModelParams::<f64>::init(spec(), 0).unwrap();
        assert_eq!(p.count(), base.count() + 16 + 64);
    }

    #[test]
    fn from_tensors_rejects_wrong_shapes() {
        let p = ModelParams::<f64>::init(spec(), 0).unwrap();
        let named: Vec<_> = p.names.iter().cloned().zip(p.tensors.iter().cloned()).collect();
        ModelParams::from_tensors(spec(), 0, named.clone()).unwrap();
        let mut bad = named;
        bad[0].1 = Tensor::zeros(vec![2, 2]);
        assert!(ModelParams::from_tensors(spec(), 0, bad).is_err());
    }
}
