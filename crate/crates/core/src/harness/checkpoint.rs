//! Model checkpoints: a JSON header describing every parameter plus a raw
//! little-endian f32 blob holding the values in registration order.
//!
//! The header pins name, shape and byte offset per parameter, so a load can
//! verify the blob against the architecture before any value is copied.
//! Non-trainable state (batch-norm running statistics) is stored the same
//! way as weights; a loaded model evaluates bit-identically to the saved
//! one when `T = f32`.

use crate::diffnet::{DiffTransformer, ModelConfig};
use crate::tensor::Scalar;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const HEADER_FILE: &str = "checkpoint.json";
pub const BLOB_FILE: &str = "checkpoint.bin";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint header: {0}")]
    Json(#[from] serde_json::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
}

/// How the checkpoint was produced; informational, not used by inference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub strategy: String,
    pub seed: u64,
    pub epochs: usize,
    pub dataset_seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    shape: Vec<usize>,
    byte_offset: usize,
    trainable: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    model: ModelConfig,
    params: Vec<ParamRecord>,
    meta: TrainingMeta,
}

pub fn save_checkpoint<T: Scalar>(
    dir: &Path,
    model: &DiffTransformer<T>,
    meta: &TrainingMeta,
) -> Result<(), CheckpointError> {
    fs::create_dir_all(dir)?;
    let mut records = Vec::new();
    let mut blob = Vec::new();
    for entry in model.params.entries() {
        records.push(ParamRecord {
            name: entry.name.clone(),
            shape: entry.value.shape().to_vec(),
            byte_offset: blob.len(),
            trainable: entry.trainable,
        });
        for &v in entry.value.data() {
            blob.extend_from_slice(&(Scalar::to_f64(v) as f32).to_le_bytes());
        }
    }
    let header = Header {
        version: VERSION,
        model: model.cfg.clone(),
        params: records,
        meta: meta.clone(),
    };
    fs::write(dir.join(HEADER_FILE), serde_json::to_vec_pretty(&header)?)?;
    fs::write(dir.join(BLOB_FILE), blob)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(
    dir: &Path,
) -> Result<(DiffTransformer<T>, TrainingMeta), CheckpointError> {
    let header: Header = serde_json::from_slice(&fs::read(dir.join(HEADER_FILE))?)?;
    if header.version != VERSION {
        return Err(CheckpointError::Format(format!(
            "unsupported version {} (expected {})",
            header.version, VERSION
        )));
    }
    let blob = fs::read(dir.join(BLOB_FILE))?;

    // Rebuild the architecture, then overwrite every tensor by name so the
    // header, not registration order, is authoritative.
    let mut model = DiffTransformer::<T>::new(&header.model, 0);
    if header.params.len() != model.params.len() {
        return Err(CheckpointError::Format(format!(
            "header lists {} parameters, architecture has {}",
            header.params.len(),
            model.params.len()
        )));
    }
    for rec in &header.params {
        let id = model.params.find(&rec.name).ok_or_else(|| {
            CheckpointError::Format(format!("unknown parameter {:?}", rec.name))
        })?;
        let value = model.params.value_mut(id);
        if value.shape() != rec.shape.as_slice() {
            return Err(CheckpointError::Format(format!(
                "parameter {:?} has shape {:?} in header but {:?} in architecture",
                rec.name,
                rec.shape,
                value.shape()
            )));
        }
        let n = value.numel();
        let end = rec.byte_offset + n * 4;
        if end > blob.len() {
            return Err(CheckpointError::Format(format!(
                "parameter {:?} needs bytes {}..{} but blob holds {}",
                rec.name,
                rec.byte_offset,
                end,
                blob.len()
            )));
        }
        for (dst, chunk) in value
            .data_mut()
            .iter_mut()
            .zip(blob[rec.byte_offset..end].chunks_exact(4))
        {
            let bits = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            *dst = T::from_f64(bits as f64);
        }
    }
    let expected_len: usize = header.params.iter().map(|r| r.shape.iter().product::<usize>() * 4).sum();
    if blob.len() != expected_len {
        return Err(CheckpointError::Format(format!(
            "blob holds {} bytes, header accounts for {}",
            blob.len(),
            expected_len
        )));
    }
    Ok((model, header.meta))
}
