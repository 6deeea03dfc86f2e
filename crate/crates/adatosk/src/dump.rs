//! Tensor dumps: little-endian f32 values in row-major order (`<stem>.bin`)
//! next to a JSON sidecar `{"dtype":"f32","shape":[..]}` (`<stem>.json`).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use adatosk_core::{Real, Tensor};
use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    dtype: String,
    shape: Vec<usize>,
}

/// `stem` with `.ext` appended; dots already in the stem are kept.
pub fn with_suffix(stem: &Path, ext: &str) -> PathBuf {
    let mut s = OsString::from(stem.as_os_str());
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Writes `values` with the given shape, narrowing to f32.
pub fn write_raw<T: Real>(stem: &Path, shape: &[usize], values: &[T]) -> Result<()> {
    ensure!(shape.iter().product::<usize>() == values.len(), "shape {shape:?} does not fit {} values", values.len());
    if let Some(dir) = stem.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let bytes: Vec<u8> = values.iter().flat_map(|v| (v.as_f64() as f32).to_le_bytes()).collect();
    let bin = with_suffix(stem, "bin");
    fs::write(&bin, bytes).with_context(|| format!("writing {}", bin.display()))?;
    let json = with_suffix(stem, "json");
    let side = Sidecar { dtype: "f32".into(), shape: shape.to_vec() };
    fs::write(&json, serde_json::to_vec(&side)?).with_context(|| format!("writing {}", json.display()))?;
    Ok(())
}

pub fn write_tensor<T: Real>(stem: &Path, t: &Tensor<T>) -> Result<()> {
    write_raw(stem, t.shape(), t.data())
}

pub fn read_tensor(stem: &Path) -> Result<Tensor<f32>> {
    let json = with_suffix(stem, "json");
    let text = fs::read_to_string(&json).with_context(|| format!("reading {}", json.display()))?;
    let side: Sidecar = serde_json::from_str(&text).with_context(|| format!("parsing {}", json.display()))?;
    if side.dtype != "f32" {
        bail!("{}: unsupported dtype {:?}", json.display(), side.dtype);
    }
    let bin = with_suffix(stem, "bin");
    let bytes = fs::read(&bin).with_context(|| format!("reading {}", bin.display()))?;
    let n: usize = side.shape.iter().product();
    ensure!(bytes.len() == 4 * n, "{}: {} bytes for shape {:?}", bin.display(), bytes.len(), side.shape);
    let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Tensor::new(side.shape, data).with_context(|| format!("loading {}", bin.display()))
}
