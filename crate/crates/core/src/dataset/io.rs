//! On-disk dataset directory: `manifest.json`, `data.bin` and an optional `mask.bin`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Channel, ChannelSpec, Dataset, DatasetMask, Mask, NoiseConfig, Roles};
use crate::error::{Error, Result};
use crate::grid::GridSpec;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATA_FILE: &str = "data.bin";
pub const MASK_FILE: &str = "mask.bin";
const DTYPE: &str = "f32le";
const LAYOUT: &str = "sample-major, then channel, then row, then column";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    grid: GridSpec,
    channels: Vec<ChannelSpec>,
    roles: Roles,
    samples: usize,
    dtype: String,
    layout: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask_file: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    mask_channels: Vec<Channel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise: Option<NoiseConfig>,
    seeds: BTreeMap<String, u64>,
    checksum: String,
}

fn checksum(bytes: &[u8]) -> String {
    format!("crc32c:{:08x}", crc32c::crc32c(bytes))
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Writes `ds` into directory `dir`, creating it if needed.
pub fn write_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    ds.validate()?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut payload = Vec::with_capacity(4 * ds.data.len());
    for v in &ds.data {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    let mut mask_file = None;
    let mut mask_channels = Vec::new();
    if let Some(m) = &ds.mask {
        let mut bytes = Vec::with_capacity(m.channels.len() * m.mask.cells());
        for _ in &m.channels {
            bytes.extend(m.mask.to_bytes());
        }
        fs::write(dir.join(MASK_FILE), bytes)?;
        mask_file = Some(MASK_FILE.to_string());
        mask_channels = m.channels.clone();
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        grid: ds.grid,
        channels: ds.channels.clone(),
        roles: ds.roles.clone(),
        samples: ds.samples,
        dtype: DTYPE.into(),
        layout: LAYOUT.into(),
        mask_file,
        mask_channels,
        noise: ds.noise,
        seeds: ds.seeds.clone(),
        checksum: checksum(&payload),
    };
    fs::write(dir.join(DATA_FILE), &payload)?;
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path)?;
    let version: serde_json::Value = serde_json::from_str(&text)?;
    let found = version
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| format_err(&manifest_path, "missing format_version"))?;
    if found != FORMAT_VERSION as u64 {
        return Err(Error::Version {
            found: found as u32,
            expected: FORMAT_VERSION,
        });
    }
    let m: Manifest = serde_json::from_str(&text)?;
    if m.dtype != DTYPE || m.layout != LAYOUT {
        return Err(format_err(
            &manifest_path,
            format!("unsupported dtype/layout {:?} / {:?}", m.dtype, m.layout),
        ));
    }

    let data_path = dir.join(DATA_FILE);
    let payload = fs::read(&data_path)?;
    let expected_len = 4 * m.samples * m.channels.len() * m.grid.cells();
    if payload.len() != expected_len {
        return Err(format_err(
            &data_path,
            format!(
                "payload has {} bytes, manifest declares {} samples ({expected_len} bytes)",
                payload.len(),
                m.samples
            ),
        ));
    }
    let found = checksum(&payload);
    if found != m.checksum {
        return Err(Error::Checksum {
            path: data_path,
            expected: m.checksum,
            found,
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();

    let mask = match &m.mask_file {
        None => None,
        Some(name) => {
            let mask_path = dir.join(name);
            let bytes = fs::read(&mask_path)?;
            let cells = m.grid.cells();
            if m.mask_channels.is_empty() || bytes.len() != cells * m.mask_channels.len() {
                return Err(format_err(&mask_path, "mask size does not match the manifest"));
            }
            if bytes.iter().any(|&b| b > 1) {
                return Err(format_err(&mask_path, "mask bytes must be 0 or 1"));
            }
            let first = &bytes[..cells];
            if bytes.chunks_exact(cells).any(|c| c != first) {
                return Err(format_err(&mask_path, "per-channel masks differ"));
            }
            Some(DatasetMask {
                channels: m.mask_channels.clone(),
                mask: Mask {
                    grid_nx: m.grid.nx,
                    grid_ny: m.grid.ny,
                    observed: first.iter().map(|&b| b == 1).collect(),
                },
            })
        }
    };

    let ds = Dataset {
        grid: m.grid,
        channels: m.channels,
        roles: m.roles,
        samples: m.samples,
        data,
        mask,
        noise: m.noise,
        seeds: m.seeds,
    };
    ds.validate()
        .map_err(|e| format_err(&manifest_path, e.to_string()))?;
    Ok(ds)
}
