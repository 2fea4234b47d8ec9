//! Binary checkpoint: `PSPCKPT1`, a canonical JSON header, then named
//! little-endian f64 blobs.
//!
//! Layout after the magic: `u64` header length, header bytes, `u64`
//! parameter count, then per parameter `u32` name length, name bytes,
//! `u32` rank, `u64` per dimension, `f64` per element. All integers are
//! little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig};
use crate::corpus::EmbeddingConfig;
use crate::error::{PspError, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"PSPCKPT1";

/// Everything besides the weights needed to rebuild and run a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub model: ModelConfig,
    pub embeddings: EmbeddingConfig,
    pub window_size: usize,
}

pub fn write_checkpoint<W: Write>(mut w: W, header: &CheckpointHeader, model: &Model) -> Result<()> {
    if header.model != model.config {
        return Err(PspError::Checkpoint("header config differs from the model's".into()));
    }
    let json = serde_json::to_vec(&serde_json::to_value(header)?)?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&(model.params.len() as u64).to_le_bytes())?;
    for (name, tensor) in model.params.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(tensor.shape().len() as u32).to_le_bytes())?;
        for &dim in tensor.shape() {
            w.write_all(&(dim as u64).to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> PspError {
    PspError::Checkpoint(format!("truncated checkpoint: {e}"))
}

// Guards against absurd allocations from corrupt length fields.
const MAX_LEN: u64 = 1 << 34;

fn bounded(n: u64, what: &str) -> Result<usize> {
    if n > MAX_LEN {
        return Err(PspError::Checkpoint(format!("{what} {n} is implausibly large")));
    }
    Ok(n as usize)
}

/// Reads a checkpoint, rebuilds the model from the echoed config and loads
/// its weights. Names and shapes must match the config exactly.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(CheckpointHeader, Model)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(PspError::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let len = bounded(read_u64(&mut r)?, "header length")?;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(truncated)?;
    let header: CheckpointHeader = serde_json::from_slice(&json)
        .map_err(|e| PspError::Checkpoint(format!("invalid header: {e}")))?;
    let count = bounded(read_u64(&mut r)?, "parameter count")?;
    let mut entries = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let name_len = bounded(read_u32(&mut r)? as u64, "name length")?;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(truncated)?;
        let name = String::from_utf8(name).map_err(|_| PspError::Checkpoint("parameter name is not UTF-8".into()))?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(bounded(read_u64(&mut r)?, "dimension")?);
        }
        let numel = bounded(shape.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d as u64)).unwrap_or(u64::MAX), "size")?;
        let mut bytes = vec![0u8; numel * 8];
        r.read_exact(&mut bytes).map_err(truncated)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let tensor = Tensor::new(shape, data).map_err(|e| PspError::Checkpoint(format!("parameter {name}: {e}")))?;
        entries.push((name, tensor));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(PspError::Checkpoint("trailing bytes after the last parameter".into()));
    }
    let mut model = Model::new(header.model.clone(), 0).map_err(|e| PspError::Checkpoint(e.to_string()))?;
    model.params.load_values(entries)?;
    Ok((header, model))
}

pub fn save_checkpoint(path: &Path, header: &CheckpointHeader, model: &Model) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), header, model)
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, Model)> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
