//! Synthetic datasets on disk: one tensor dump per clip plus `manifest.json`.

use std::fs;
use std::path::Path;

use adatosk_core::synth::{Dataset, LabeledClip, SynthSpec};
use adatosk_core::tokenizer::VideoVolume;
use anyhow::{ensure, Context, Result};
use serde::{Deserialize, Serialize};

use crate::dump::{read_tensor, write_tensor};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipEntry {
    /// Dump stem relative to the dataset directory.
    pub file: String,
    pub label: usize,
    pub split: Split,
    /// 1-based temporal blocks with a planted change.
    pub key_frames: Vec<usize>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: SynthSpec,
    pub per_class: usize,
    pub seed: u64,
    pub clips: Vec<ClipEntry>,
}

pub fn save_dataset(dir: &Path, data: &Dataset<f32>, per_class: usize, seed: u64) -> Result<()> {
    let spec = data.clips.first().map(|c| c.spec.clone()).context("dataset has no clips")?;
    let mut clips = Vec::with_capacity(data.clips.len());
    for (i, clip) in data.clips.iter().enumerate() {
        let file = format!("clips/clip_{i:04}");
        write_tensor(&dir.join(&file), &clip.volume.as_tensor())?;
        let split = if data.train.contains(&i) { Split::Train } else { Split::Eval };
        clips.push(ClipEntry {
            file,
            label: clip.label,
            split,
            key_frames: clip.spec.key_frames.clone(),
            seed: clip.seed,
        });
    }
    let manifest = Manifest { spec, per_class, seed, clips };
    let path = dir.join(MANIFEST);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).with_context(|| format!("writing {}", path.display()))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text =
        fs::read_to_string(&path).with_context(|| format!("reading {} (run gen-data first?)", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset<f32>> {
    let m = read_manifest(dir)?;
    let mut data = Dataset { clips: Vec::new(), train: Vec::new(), eval: Vec::new() };
    for (i, e) in m.clips.iter().enumerate() {
        let t = read_tensor(&dir.join(&e.file))?;
        let volume = VideoVolume::from_tensor(&t).with_context(|| format!("clip {}", e.file))?;
        ensure!(
            volume.dims == m.spec.geometry.video,
            "clip {} has dims {:?}, manifest says {:?}",
            e.file,
            volume.dims,
            m.spec.geometry.video
        );
        let spec = SynthSpec { key_frames: e.key_frames.clone(), ..m.spec.clone() };
        data.clips.push(LabeledClip { volume, label: e.label, seed: e.seed, spec });
        match e.split {
            Split::Train => data.train.push(i),
            Split::Eval => data.eval.push(i),
        }
    }
    Ok(data)
}
