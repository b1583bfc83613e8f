//! On-disk dataset container.
//!
//! Layout: one line of UTF-8 JSON terminated by `\n`, then `n·channels·L`
//! little-endian `f32` samples, then `n` little-endian `i32` labels.
//! Samples are stored as `f32`; values already representable in `f32`
//! round-trip exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::EpochedDataset;
use crate::error::{format_err, Result};
use crate::signal::{ContinuousRecording, Event};
use crate::tensor::Tensor;

pub const CONTAINER_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContainerHeader {
    pub format_version: u32,
    pub n: usize,
    pub channels: usize,
    #[serde(rename = "L")]
    pub len: usize,
    pub fs: f64,
    pub class_names: Vec<String>,
    pub provenance: serde_json::Value,
}

/// Dataset plus the free-form provenance stored with it.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetFile {
    pub dataset: EpochedDataset,
    pub provenance: serde_json::Value,
}

pub fn to_bytes(ds: &EpochedDataset, provenance: &serde_json::Value) -> Result<Vec<u8>> {
    let header = ContainerHeader {
        format_version: CONTAINER_VERSION,
        n: ds.len(),
        channels: ds.channels(),
        len: ds.epoch_len(),
        fs: ds.fs,
        class_names: ds.class_names.clone(),
        provenance: provenance.clone(),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    out.reserve(4 * ds.epochs.numel() + 4 * ds.len());
    for &v in ds.epochs.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    for &l in &ds.labels {
        out.extend_from_slice(&(l as i32).to_le_bytes());
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<DatasetFile> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| format_err!("dataset header is not newline-terminated"))?;
    let h: ContainerHeader =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| format_err!("dataset header: {e}"))?;
    if h.format_version != CONTAINER_VERSION {
        return Err(format_err!(
            "dataset format version {} unsupported (expected {CONTAINER_VERSION})",
            h.format_version
        ));
    }
    let body = &bytes[nl + 1..];
    let samples = h
        .n
        .checked_mul(h.channels)
        .and_then(|v| v.checked_mul(h.len))
        .ok_or_else(|| format_err!("dataset dimensions overflow"))?;
    let expected = 4 * samples + 4 * h.n;
    if body.len() != expected {
        return Err(format_err!(
            "dataset payload is {} bytes, expected {expected} (n={}, channels={}, L={})",
            body.len(),
            h.n,
            h.channels,
            h.len
        ));
    }
    let (payload, label_bytes) = body.split_at(4 * samples);
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    let mut labels = Vec::with_capacity(h.n);
    for (i, b) in label_bytes.chunks_exact(4).enumerate() {
        let l = i32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        if l < 0 || l as usize >= h.class_names.len() {
            return Err(format_err!(
                "label {l} at index {i} out of range for {} classes",
                h.class_names.len()
            ));
        }
        labels.push(l as usize);
    }
    let epochs = Tensor::new(vec![h.n, h.channels, h.len], data)?;
    let dataset = EpochedDataset::new(epochs, labels, h.fs, h.class_names)
        .map_err(|e| format_err!("dataset contents: {e}"))?;
    Ok(DatasetFile {
        dataset,
        provenance: h.provenance,
    })
}

pub fn save(ds: &EpochedDataset, provenance: &serde_json::Value, path: &Path) -> Result<()> {
    let bytes = to_bytes(ds, provenance)?;
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<DatasetFile> {
    from_bytes(&fs::read(path)?)
}

const RAW_KIND: &str = "raw_slots";

/// Packs a slot-tiled recording as one row per trial, covering the
/// lead-in, window and tail, so the recording can be rebuilt exactly.
pub fn pack_recording(rec: &ContinuousRecording, slot: usize, pre: usize, extra: serde_json::Value) -> Result<DatasetFile> {
    let n = rec.events.len();
    if slot == 0 || rec.samples() != n * slot {
        return Err(format_err!(
            "recording of {} samples does not tile into {n} slots of {slot}",
            rec.samples()
        ));
    }
    for (i, e) in rec.events.iter().enumerate() {
        if e.sample != i * slot + pre {
            return Err(format_err!("event {i} at sample {} is not at its slot onset", e.sample));
        }
    }
    let c = rec.channels();
    let mut data = Vec::with_capacity(n * c * slot);
    for i in 0..n {
        for ch in &rec.data {
            data.extend_from_slice(&ch[i * slot..(i + 1) * slot]);
        }
    }
    let epochs = Tensor::new(vec![n, c, slot], data)?;
    let labels = rec.events.iter().map(|e| e.class_id).collect();
    let dataset = EpochedDataset::new(epochs, labels, rec.fs, rec.class_names.clone())?;
    let provenance = serde_json::json!({
        "kind": RAW_KIND,
        "pre_samples": pre,
        "channel_names": rec.channel_names,
        "source": extra,
    });
    Ok(DatasetFile { dataset, provenance })
}

/// Inverse of [`pack_recording`]; `None` if the file holds epoched data.
pub fn unpack_recording(file: &DatasetFile) -> Result<Option<ContinuousRecording>> {
    let p = &file.provenance;
    if p.get("kind").and_then(|k| k.as_str()) != Some(RAW_KIND) {
        return Ok(None);
    }
    let pre = p
        .get("pre_samples")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| format_err!("raw dataset provenance lacks pre_samples"))? as usize;
    let ds = &file.dataset;
    let (n, c, slot) = ds.epochs.dims3()?;
    let names: Vec<String> = match p.get("channel_names") {
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| format_err!("channel_names: {e}"))?,
        None => (0..c).map(|i| format!("ch{i:02}")).collect(),
    };
    let mut data = vec![Vec::with_capacity(n * slot); c];
    for i in 0..n {
        for (ch, out) in data.iter_mut().enumerate() {
            let start = (i * c + ch) * slot;
            out.extend_from_slice(&ds.epochs.data()[start..start + slot]);
        }
    }
    let events = ds
        .labels
        .iter()
        .enumerate()
        .map(|(i, &class_id)| Event {
            sample: i * slot + pre,
            class_id,
        })
        .collect();
    ContinuousRecording::new(data, ds.fs, names, events, ds.class_names.clone())
        .map(Some)
        .map_err(|e| format_err!("raw dataset: {e}"))
}
