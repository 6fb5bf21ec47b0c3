//! On-disk chain checkpoints: NPY arrays plus a JSON manifest.
//!
//! Full chains store `x_samples.npy` and `z_samples.npy` with shape
//! `(n_mc, C, H, W)` as float32 and `t_star_trace.npy` as int64. Thin chains
//! store their running summaries instead. Nothing time-dependent is written,
//! so identical chains give byte-identical directories.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::{Image, Shape};
use crate::npy::{self, NpyArray, NpyData};
use crate::sampler::{Chain, ChainSamples, SamplerConfig};

pub const MANIFEST: &str = "manifest.json";
pub const X_SAMPLES: &str = "x_samples.npy";
pub const Z_SAMPLES: &str = "z_samples.npy";
pub const T_STAR_TRACE: &str = "t_star_trace.npy";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Storage {
    Full,
    Thin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub storage: Storage,
    /// `[C, H, W]`.
    pub image_shape: [usize; 3],
    pub n_mc: usize,
    pub n_bi: usize,
    pub config: SamplerConfig,
    pub schedule_id: String,
    pub task_digest: String,
    pub files: Vec<String>,
}

/// Serializes a JSON value with object keys sorted at every level.
pub fn canonical_json(value: &Value) -> String {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", Value::String(k.clone()), canonical_json(&map[k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => {
            let body: Vec<String> = items.iter().map(canonical_json).collect();
            format!("[{}]", body.join(","))
        }
        other => other.to_string(),
    }
}

/// SHA-256 of the canonical JSON form, hex encoded. Independent of key order.
pub fn digest(value: &Value) -> String {
    hex::encode(Sha256::digest(canonical_json(value).as_bytes()))
}

fn stack(images: &[Image]) -> impl Iterator<Item = f64> + '_ {
    images.iter().flat_map(|img| img.as_slice().iter().copied())
}

/// Writes `chain` into `dir`, creating it if needed.
pub fn write_checkpoint(dir: &Path, chain: &Chain, schedule_id: &str, task: &Value) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let s = chain.shape();
    let dims = [s.channels, s.height, s.width];
    let trace: Vec<i64> = chain.t_star_trace().iter().map(|&t| t as i64).collect();
    npy::save(
        &dir.join(T_STAR_TRACE),
        &NpyArray::new(vec![trace.len()], NpyData::I64(trace))?,
    )?;
    let mut files = vec![T_STAR_TRACE.to_string()];

    let storage = match chain.samples() {
        ChainSamples::Full { x, z } => {
            let shape = [x.len(), s.channels, s.height, s.width];
            npy::save_f32(&dir.join(X_SAMPLES), &shape, stack(x))?;
            npy::save_f32(&dir.join(Z_SAMPLES), &shape, stack(z))?;
            files.extend([X_SAMPLES.to_string(), Z_SAMPLES.to_string()]);
            Storage::Full
        }
        ChainSamples::Thin(thin) => {
            npy::save_f32(&dir.join("mean_x.npy"), &dims, thin.mean_x().iter().copied())?;
            npy::save_f32(&dir.join("mean_z.npy"), &dims, thin.mean_z().iter().copied())?;
            npy::save_f32(&dir.join("var_x.npy"), &dims, thin.variance_x())?;
            let slots: Vec<f64> = thin.reservoir().flatten().copied().collect();
            npy::save_f32(
                &dir.join("reservoir_x.npy"),
                &[thin.reservoir_len(), s.channels, s.height, s.width],
                slots,
            )?;
            files.extend(["mean_x.npy", "mean_z.npy", "var_x.npy", "reservoir_x.npy"].map(String::from));
            Storage::Thin
        }
    };

    let manifest = Manifest {
        format_version: 1,
        storage,
        image_shape: dims,
        n_mc: chain.len(),
        n_bi: chain.n_bi(),
        config: chain.config().clone(),
        schedule_id: schedule_id.to_string(),
        task_digest: digest(task),
        files,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Npy(e.to_string()))?;
    fs::write(dir.join(MANIFEST), text + "\n")?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    serde_json::from_str(&text).map_err(|e| Error::Npy(format!("invalid manifest: {e}")))
}

fn split_images(array: &NpyArray, shape: Shape) -> Result<Vec<Image>> {
    if array.shape.len() != 4 || array.shape[1..] != [shape.channels, shape.height, shape.width] {
        return Err(Error::Npy(format!(
            "sample array shape {:?} does not match image shape {shape}",
            array.shape
        )));
    }
    array
        .data
        .to_f64()
        .chunks_exact(shape.len())
        .map(|c| Image::from_vec(shape, c.to_vec()))
        .collect()
}

/// Loads a full checkpoint back into a chain (float32 precision).
pub fn read_checkpoint(dir: &Path) -> Result<(Manifest, Chain)> {
    let manifest = read_manifest(dir)?;
    if manifest.storage != Storage::Full {
        return Err(Error::Npy(
            "thin checkpoints hold summaries only and cannot be reloaded as a chain".into(),
        ));
    }
    let [c, h, w] = manifest.image_shape;
    let shape = Shape::new(c, h, w);
    let x = split_images(&npy::load(&dir.join(X_SAMPLES))?, shape)?;
    let z = split_images(&npy::load(&dir.join(Z_SAMPLES))?, shape)?;
    let trace = match npy::load(&dir.join(T_STAR_TRACE))?.data {
        NpyData::I64(v) => v.into_iter().map(|t| t as usize).collect(),
        _ => return Err(Error::Npy("t* trace must be int64".into())),
    };
    let chain = Chain::from_samples(x, z, trace, manifest.n_bi)?.with_config(manifest.config.clone());
    Ok((manifest, chain))
}
