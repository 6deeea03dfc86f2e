//! Checkpoints: one tensor dump per named parameter plus `checkpoint.json`.

use std::fs;
use std::path::Path;

use adatosk_core::config::RunConfig;
use adatosk_core::model::{ModelParams, ModelSpec};
use anyhow::{ensure, Context, Result};
use serde::{Deserialize, Serialize};

use crate::dump::{read_tensor, write_tensor};

pub const MANIFEST: &str = "checkpoint.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub config: RunConfig,
    pub spec: ModelSpec,
    /// Initialization seed of the parameters.
    pub seed: u64,
    pub step: usize,
    pub epoch: usize,
    pub parameters: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub params: ModelParams<f32>,
}

pub fn save_checkpoint(
    dir: &Path,
    params: &ModelParams<f32>,
    cfg: &RunConfig,
    step: usize,
    epoch: usize,
) -> Result<()> {
    for (name, t) in params.names.iter().zip(&params.tensors) {
        write_tensor(&dir.join("params").join(name), t)?;
    }
    let manifest = CheckpointManifest {
        config: cfg.clone(),
        spec: params.spec,
        seed: params.seed,
        step,
        epoch,
        parameters: params.names.clone(),
    };
    let path = dir.join(MANIFEST);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).with_context(|| format!("writing {}", path.display()))
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {} (run train first?)", path.display()))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    ensure!(
        manifest.spec == ModelSpec::from_config(&manifest.config),
        "{}: model spec disagrees with the stored config",
        path.display()
    );
    let named = manifest
        .parameters
        .iter()
        .map(|n| Ok((n.clone(), read_tensor(&dir.join("params").join(n))?)))
        .collect::<Result<Vec<_>>>()?;
    let params = ModelParams::from_tensors(manifest.spec, manifest.seed, named)
        .with_context(|| format!("loading {}", dir.display()))?;
    Ok(Checkpoint { manifest, params })
}
