//! Self-describing checkpoint file.
//!
//! Layout: one line of UTF-8 JSON (architecture, parameter names and
//! shapes, format version) terminated by `\n`, then every parameter as
//! little-endian `f64` in header order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{format_err, Result};

use super::config::ModelConfig;
use super::model::{Ablation, DiffEModel};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "diffe-checkpoint";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    format_version: u32,
    arm: Ablation,
    in_channels: usize,
    n_classes: usize,
    input_scale: f64,
    model: ModelConfig,
    params: Vec<ParamEntry>,
}

pub fn to_bytes(model: &DiffEModel) -> Result<Vec<u8>> {
    let header = Header {
        format: MAGIC.into(),
        format_version: CHECKPOINT_VERSION,
        arm: model.arm(),
        in_channels: model.in_channels(),
        n_classes: model.n_classes(),
        input_scale: model.input_scale,
        model: model.config().clone(),
        params: model
            .store()
            .iter()
            .map(|(_, p)| ParamEntry {
                name: p.name.clone(),
                shape: p.tensor.shape().to_vec(),
            })
            .collect(),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    for (_, p) in model.store().iter() {
        for v in p.tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<DiffEModel> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| format_err!("checkpoint header is not newline-terminated"))?;
    let header: Header = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| format_err!("checkpoint header: {e}"))?;
    if header.format != MAGIC {
        return Err(format_err!("not a checkpoint (format '{}')", header.format));
    }
    if header.format_version != CHECKPOINT_VERSION {
        return Err(format_err!(
            "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
            header.format_version
        ));
    }
    let mut model = DiffEModel::new(&header.model, header.arm, header.in_channels, header.n_classes, 0)?;
    model.input_scale = header.input_scale;
    let payload = &bytes[nl + 1..];
    let expected: usize = header.params.iter().map(|p| p.shape.iter().product::<usize>()).sum::<usize>() * 8;
    if payload.len() != expected {
        return Err(format_err!(
            "checkpoint payload is {} bytes, expected {expected}",
            payload.len()
        ));
    }
    let ids: Vec<_> = model.store().ids().collect();
    if ids.len() != header.params.len() {
        return Err(format_err!(
            "checkpoint lists {} parameters, architecture has {}",
            header.params.len(),
            ids.len()
        ));
    }
    let mut offset = 0;
    for (id, entry) in ids.into_iter().zip(&header.params) {
        let p = model.store().get(id);
        if p.name != entry.name || p.tensor.shape() != entry.shape.as_slice() {
            return Err(format_err!(
                "checkpoint parameter {} {:?} does not match architecture {} {:?}",
                entry.name,
                entry.shape,
                p.name,
                p.tensor.shape()
            ));
        }
        let t = model.store_mut().tensor_mut(id);
        for v in t.data_mut() {
            let mut b = [0u8; 8];
            b.copy_from_slice(&payload[offset..offset + 8]);
            *v = f64::from_le_bytes(b);
            offset += 8;
        }
    }
    Ok(model)
}

/// Writes through a temporary file so an interrupted save never clobbers
/// the previous checkpoint.
pub fn save(model: &DiffEModel, path: &Path) -> Result<()> {
    let bytes = to_bytes(model)?;
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<DiffEModel> {
    from_bytes(&fs::read(path)?)
}
