//! Checkpoint container.
//!
//! Layout: magic `PGCK`, `u32` version, `u64` header length, a JSON header, then
//! every tensor as f32 little-endian values in header order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use porogan_core::dataset::{ChannelSpec, Dataset, Roles};
use porogan_core::GridSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tch::{Kind, Tensor};

use crate::config::{Direction, DiscriminatorSpec, GeneratorSpec, TrainConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PGCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<i64>,
}

impl TensorEntry {
    fn len(&self) -> usize {
        self.shape.iter().product::<i64>() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub config: TrainConfig,
    pub direction: Direction,
    pub generator: GeneratorSpec,
    pub discriminator: DiscriminatorSpec,
    pub grid: GridSpec,
    pub roles: Roles,
    /// Normalization bounds of the training data, needed to denormalize predictions.
    pub channels: Vec<ChannelSpec>,
    pub dataset_digest: String,
    /// Completed training steps.
    pub step: usize,
    pub generator_optimizer_steps: u64,
    pub discriminator_optimizer_steps: u64,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    /// Values of `header.tensors`, in the same order.
    pub values: Vec<Vec<f32>>,
}

fn ckpt_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Flattened f32 copy of a tensor.
pub fn tensor_values(t: &Tensor) -> Result<Vec<f32>> {
    if t.kind() != Kind::Float {
        return Err(Error::Config(format!("checkpoint tensors must be f32, found {:?}", t.kind())));
    }
    Ok(Vec::<f32>::try_from(t.detach().to_device(tch::Device::Cpu).reshape([-1]))?)
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<Tensor> {
        let k = self.header.tensors.iter().position(|e| e.name == name)?;
        Some(Tensor::from_slice(&self.values[k]).reshape(self.header.tensors[k].shape.as_slice()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let header = serde_json::to_vec(&self.header)?;
        let mut buf = Vec::with_capacity(16 + header.len());
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
        buf.extend_from_slice(&header);
        for v in &self.values {
            for x in v {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        let tmp: PathBuf = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&buf)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path)?;
        if bytes.len() < 16 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(ckpt_err(path, "not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(ckpt_err(
                path,
                format!("unsupported version {version} (expected {CHECKPOINT_VERSION})"),
            ));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let payload_start = 16usize
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| ckpt_err(path, "truncated header"))?;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[16..payload_start])?;
        let expected: usize = header.tensors.iter().map(TensorEntry::len).sum();
        let payload = &bytes[payload_start..];
        if payload.len() != 4 * expected {
            return Err(ckpt_err(
                path,
                format!("payload has {} bytes, expected {}", payload.len(), 4 * expected),
            ));
        }
        let mut values = Vec::with_capacity(header.tensors.len());
        let mut offset = 0;
        for entry in &header.tensors {
            let n = entry.len();
            values.push(
                payload[4 * offset..4 * (offset + n)]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            );
            offset += n;
        }
        Ok(Self { header, values })
    }
}

/// SHA-256 over the dataset metadata and its f32 payload.
pub fn dataset_digest(ds: &Dataset) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&(&ds.grid, &ds.channels, &ds.roles, ds.samples))?);
    for v in &ds.data {
        h.update(v.to_le_bytes());
    }
    let hex: String = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok(format!("sha256:{hex}"))
}
