//! Parameter checkpoints: self-describing JSON, one entry per weight block
//! (`key -> shape + flat data`), with a versioned header. Values survive a
//! save/load round trip bit-exactly.

use super::{Error, LayerParams, NetworkParams, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

pub const CHECKPOINT_FORMAT: &str = "warynav-params";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format: String,
    version: u32,
    spec: super::NetworkSpec,
    tensors: BTreeMap<String, TensorEntry>,
}

pub fn save_params(params: &NetworkParams, path: &Path) -> Result<()> {
    let mut tensors = BTreeMap::new();
    for (key, shape, data) in params.tensors() {
        tensors.insert(
            key,
            TensorEntry {
                shape,
                data: data.to_vec(),
            },
        );
    }
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        spec: params.spec.clone(),
        tensors,
    };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Checkpoint(format!("serialize: {e}")))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<NetworkParams> {
    let text = std::fs::read_to_string(path)?;
    let file: CheckpointFile = serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!(
            "{}: unknown format {:?}",
            path.display(),
            file.format
        )));
    }
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: unsupported version {}",
            path.display(),
            file.version
        )));
    }
    file.spec.validate()?;

    // Build a zero skeleton from the spec, then fill every block by key.
    let mut params = super::init_params(&file.spec, 0)?.zeroed_like();
    let expected: Vec<(String, Vec<usize>)> = params
        .tensors()
        .iter()
        .map(|(k, s, _)| (k.clone(), s.clone()))
        .collect();
    if expected.len() != file.tensors.len() {
        return Err(Error::Checkpoint(format!(
            "{}: expected {} tensors, found {}",
            path.display(),
            expected.len(),
            file.tensors.len()
        )));
    }
    for (key, shape) in &expected {
        let entry = file.tensors.get(key).ok_or_else(|| {
            Error::Checkpoint(format!("{}: missing tensor {key}", path.display()))
        })?;
        if &entry.shape != shape {
            return Err(Error::Checkpoint(format!(
                "{}: tensor {key} has shape {:?}, expected {:?}",
                path.display(),
                entry.shape,
                shape
            )));
        }
        let len: usize = shape.iter().product();
        if entry.data.len() != len {
            return Err(Error::Checkpoint(format!(
                "{}: tensor {key} has {} values, expected {len}",
                path.display(),
                entry.data.len()
            )));
        }
    }
    fill_tensors(&mut params, &file.tensors);
    if !params.is_finite() {
        return Err(Error::Checkpoint(format!(
            "{}: non-finite parameter value",
            path.display()
        )));
    }
    Ok(params)
}

fn fill_tensors(params: &mut NetworkParams, tensors: &BTreeMap<String, TensorEntry>) {
    for (k, layer) in params.layers.iter_mut().enumerate() {
        match layer {
            LayerParams::Dense { w, b, .. } => {
                w.data.copy_from_slice(&tensors[&format!("layer{k}.dense.w")].data);
                b.copy_from_slice(&tensors[&format!("layer{k}.dense.b")].data);
            }
            LayerParams::Lstm(l) => {
                for (g, name) in super::GATE_NAMES.iter().enumerate() {
                    l.w[g]
                        .data
                        .copy_from_slice(&tensors[&format!("layer{k}.lstm.w_{name}")].data);
                    l.u[g]
                        .data
                        .copy_from_slice(&tensors[&format!("layer{k}.lstm.u_{name}")].data);
                    l.b[g].copy_from_slice(&tensors[&format!("layer{k}.lstm.b_{name}")].data);
                }
            }
        }
    }
}
