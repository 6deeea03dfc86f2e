//! Labeled synthetic clips with planted key frames.
//!
//! Each clip is a static textured background with a rectangular foreground
//! whose intensity follows a class-specific temporal trajectory. At every
//! planted key block the foreground brightness steps up abruptly. Gaussian
//! noise is added everywhere and values are clamped to `[0, 1]`.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};
use crate::real::Real;
use crate::tokenizer::{Geometry, VideoVolume};

const FOREGROUND_BASE: f64 = 0.15;
const BACKGROUND_LOW: f64 = 0.05;
const BACKGROUND_HIGH: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub class_count: usize,
    pub geometry: Geometry,
    /// 1-based temporal block indices in `2..=N_t`; block `k` differs abruptly from block `k − 1`.
    pub key_frames: Vec<usize>,
    pub noise_sigma: f64,
    /// Share of the frame area covered by static background.
    pub redundancy_fraction: f64,
    /// Brightness step at each key block; at least ten times `noise_sigma`.
    pub step: f64,
    /// Peak-to-peak intensity of the class trajectory.
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            class_count: 3,
            geometry: Geometry::DESK,
            key_frames: vec![3],
            noise_sigma: 0.02,
            redundancy_fraction: 0.3,
            step: 0.3,
            amplitude: 0.15,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        let n_t = self.geometry.n_time();
        if self.class_count == 0 {
            return Err(arg_err!("class_count must be at least 1"));
        }
        if let Some(&k) = self.key_frames.iter().find(|&&k| k < 2 || k > n_t) {
            return Err(arg_err!("key frame {k} outside 2..={n_t}"));
        }
        if !(0.0..1.0).contains(&self.redundancy_fraction) {
            return Err(arg_err!("redundancy_fraction must lie in [0, 1)"));
        }
        if self.noise_sigma.is_nan() || self.noise_sigma < 0.0 {
            return Err(arg_err!("noise_sigma must be non-negative"));
        }
        if self.step < 10.0 * self.noise_sigma {
            return Err(arg_err!("key-frame step {} is below ten times the noise {}", self.step, self.noise_sigma));
        }
        let peak = FOREGROUND_BASE + self.amplitude + self.step * self.key_frames.len() as f64;
        if self.amplitude < 0.0 || peak > 1.0 {
            return Err(arg_err!("foreground would exceed 1.0 (peak {peak})"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledClip<T> {
    pub volume: VideoVolume<T>,
    pub label: usize,
    pub seed: u64,
    pub spec: SynthSpec,
}

/// Class trajectory at normalized time `u ∈ [0, 1]`, valued in `[0, 1]`.
pub fn trajectory(class_id: usize, u: f64) -> f64 {
    use core::f64::consts::PI;
    match class_id {
        0 => u,
        1 => 1.0 - u,
        2 => 1.0 - (2.0 * u - 1.0).abs(),
        3 => (2.0 * u - 1.0).abs(),
        c => {
            let cycles = 1.0 + ((c - 4) / 2) as f64 * 0.5;
            let phase = if c % 2 == 0 { 0.0 } else { PI };
            0.5 + 0.5 * Float::sin(2.0 * PI * cycles * u + phase)
        }
    }
}

/// One clip of class `class_id`; deterministic in `(spec, class_id, seed)`.
pub fn gen_clip<T: Real>(spec: &SynthSpec, class_id: usize, seed: u64) -> Result<LabeledClip<T>> {
    spec.validate()?;
    if class_id >= spec.class_count {
        return Err(arg_err!("class {class_id} out of range for {} classes", spec.class_count));
    }
    let v = spec.geometry.video;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ spec.seed.rotate_left(32));
    rng.set_stream(class_id as u64);

    let background: Vec<f64> =
        (0..v.height * v.width * v.channels).map(|_| rng.random_range(BACKGROUND_LOW..BACKGROUND_HIGH)).collect();

    let side = Float::sqrt(1.0 - spec.redundancy_fraction);
    let fh = Float::round(v.height as f64 * side) as usize;
    let fw = Float::round(v.width as f64 * side) as usize;
    let (fh, fw) = (fh.min(v.height), fw.min(v.width));
    let top = if fh > 0 { rng.random_range(0..=v.height - fh) } else { 0 };
    let left = if fw > 0 { rng.random_range(0..=v.width - fw) } else { 0 };

    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| arg_err!("noise: {e}"))?;
    let t_patch = spec.geometry.patch.t;
    let mut data = Vec::with_capacity(v.frames * v.height * v.width * v.channels);
    for f in 0..v.frames {
        let u = if v.frames > 1 { f as f64 / (v.frames - 1) as f64 } else { 0.0 };
        let steps = spec.key_frames.iter().filter(|&&k| f >= (k - 1) * t_patch).count();
        let fg = FOREGROUND_BASE + spec.amplitude * trajectory(class_id, u) + spec.step * steps as f64;
        for y in 0..v.height {
            for x in 0..v.width {
                let inside = y >= top && y < top + fh && x >= left && x < left + fw;
                for c in 0..v.channels {
                    let clean = if inside { fg } else { background[(y * v.width + x) * v.channels + c] };
                    let n = if spec.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    data.push(T::lit((clean + n).clamp(0.0, 1.0)));
                }
            }
        }
    }
    Ok(LabeledClip { volume: VideoVolume::new(v, data)?, label: class_id, seed, spec: spec.clone() })
}

/// Balanced labeled clips with a seeded 80/20 train/eval split.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub clips: Vec<LabeledClip<T>>,
    pub train: Vec<usize>,
    pub eval: Vec<usize>,
}

impl<T: Real> Dataset<T> {
    pub fn train_clips(&self) -> impl Iterator<Item = &LabeledClip<T>> {
        self.train.iter().map(|&i| &self.clips[i])
    }

    pub fn eval_clips(&self) -> impl Iterator<Item = &LabeledClip<T>> {
        self.eval.iter().map(|&i| &self.clips[i])
    }
}

/// `per_class` clips of every class. The training share is `floor(0.8·n)`.
pub fn gen_dataset<T: Real>(spec: &SynthSpec, per_class: usize, seed: u64) -> Result<Dataset<T>> {
    if per_class == 0 {
        return Err(arg_err!("per_class must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clips = Vec::with_capacity(spec.class_count * per_class);
    for class_id in 0..spec.class_count {
        for _ in 0..per_class {
            clips.push(gen_clip(spec, class_id, rng.next_u64())?);
        }
    }
    let mut order: Vec<usize> = (0..clips.len()).collect();
    order.shuffle(&mut rng);
    let n_train = clips.len() * 4 / 5;
    let eval = order.split_off(n_train);
    Ok(Dataset { clips, train: order, eval })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agnostic::{select_activated, temporal_diff, DiffMode};
    use crate::hard_mask::{gather_visible, HardMask};
    use crate::tokenizer::tokenize;

    #[test]
    fn near_constant_clip() {
        let spec =
            SynthSpec { key_frames: vec![], noise_sigma: 0.0, redundancy_fraction: 1.0 - 1e-6, ..Default::default() };
        let clip = gen_clip::<f64>(&spec, 0, 3).unwrap();
        let g = tokenize(&clip.volume, spec.geometry.patch).unwrap();
        let v = gather_visible(&g, &HardMask::none(g.n_space())).unwrap();
        assert!(temporal_diff(&v, DiffMode::L1).unwrap().tau.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn planted_pairs_dominate() {
        let spec = SynthSpec { key_frames: vec![3, 4], noise_sigma: 0.003, step: 0.3, ..Default::default() };
        for class_id in 0..3 {
            let clip = gen_clip::<f64>(&spec, class_id, 17).unwrap();
            let g = tokenize(&clip.volume, spec.geometry.patch).unwrap();
            let v = gather_visible(&g, &HardMask::none(g.n_space())).unwrap();
            let tau = temporal_diff(&v, DiffMode::L1).unwrap();
            // 1-based blocks 3 and 4 are 0-based frames 2 and 3
            assert_eq!(select_activated(&tau, 2).unwrap().frames, vec![2, 3]);
        }
    }

    #[test]
    fn deterministic_clips() {
        let spec = SynthSpec::default();
        let a = gen_clip::<f32>(&spec, 1, 5).unwrap();
        let b = gen_clip::<f32>(&spec, 1, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.volume, gen_clip::<f32>(&spec, 1, 6).unwrap().volume);
        assert!(gen_clip::<f32>(&spec, 3, 5).is_err());
    }

    #[test]
    fn invalid_specs() {
        let bad_key = SynthSpec { key_frames: vec![1], ..Default::default() };
        assert!(bad_key.validate().is_err());
        let bad_key = SynthSpec { key_frames: vec![5], ..Default::default() };
        assert!(bad_key.validate().is_err());
        let bad_red = SynthSpec { redundancy_fraction: 1.0, ..Default::default() };
        assert!(bad_red.validate().is_err());
        let weak_step = SynthSpec { step: 0.1, noise_sigma: 0.02, ..Default::default() };
        assert!(weak_step.validate().is_err());
    }

    #[test]
    fn dataset_split_and_balance() {
        let spec = SynthSpec::default();
        let ds = gen_dataset::<f32>(&spec, 8, 7).unwrap();
        assert_eq!(ds.clips.len(), 24);
        assert_eq!((ds.train.len(), ds.eval.len()), (19, 5));
        let mut hist = [0; 3];
        ds.clips.iter().for_each(|c| hist[c.label] += 1);
        assert_eq!(hist, [8, 8, 8]);
        let again = gen_dataset::<f32>(&spec, 8, 7).unwrap();
        assert_eq!((ds.train.clone(), ds.eval.clone()), (again.train, again.eval));
        assert!(gen_dataset::<f32>(&spec, 0, 7).is_err());
    }

    #[test]
    fn noiseless_classes_are_linearly_separable() {
        // In-block frame slope, averaged over the clip: +g for ramp-up,
        // −g for ramp-down and exactly 0 for the pulse.
        let spec = SynthSpec { noise_sigma: 0.0, ..Default::default() };
        let geom = spec.geometry;
        let half = geom.token_dim() / geom.patch.t;
        for seed in 0..20 {
            let feats: Vec<f64> = (0..3)
                .map(|c| {
                    let clip = gen_clip::<f64>(&spec, c, seed).unwrap();
                    let g = tokenize(&clip.volume, geom.patch).unwrap();
                    let pooled = crate::numerics::avgpool(
                        &g.data.clone().reshape(vec![geom.n_time() * geom.n_space(), geom.token_dim()]).unwrap(),
                        0,
                    )
                    .unwrap();
                    // second in-block frame minus first
                    (0..half).map(|i| pooled.data()[half + i] - pooled.data()[i]).sum()
                })
                .collect();
            let gap = feats[0];
            assert!(gap > 0.0);
            // scores (x, −x, gap/2) pick the right class for every clip
            let scores = |x: f64| [x, -x, gap / 2.0];
            for (c, &x) in feats.iter().enumerate() {
                let s = scores(x);
                let best = (0..3).max_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
                assert_eq!(best, c, "seed {seed}: {feats:?}");
            }
        }
    }
}
