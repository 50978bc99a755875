//! Single-snapshot files in physical units (f64), used as the resumable
//! archive behind dataset generation.
//!
//! Layout: magic `PGSN`, u32 version, u64 header length, JSON header, then the
//! `log_k`, `p`, `ux`, `uy` rasters as f64 little-endian.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fom::{SolverMeta, Snapshot};
use crate::grid::{GridSpec, ScalarField};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"PGSN";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    grid: GridSpec,
    units: [String; 4],
    meta: SolverMeta,
    tag: String,
}

/// Writes through a temporary file and a rename so an interrupted run never
/// leaves a partial snapshot behind.
pub fn write_snapshot(path: impl AsRef<Path>, snap: &Snapshot, tag: &str) -> Result<()> {
    let path = path.as_ref();
    let fields = [&snap.log_k, &snap.p, &snap.ux, &snap.uy];
    let header = serde_json::to_vec(&Header {
        grid: snap.log_k.grid,
        units: fields.map(|f| f.units.clone()),
        meta: snap.meta,
        tag: tag.to_string(),
    })?;
    let mut bytes = Vec::with_capacity(16 + header.len() + 32 * snap.log_k.values.len());
    bytes.extend_from_slice(SNAPSHOT_MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header);
    for f in fields {
        for v in &f.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Returns the snapshot and the tag it was written with.
pub fn read_snapshot(path: impl AsRef<Path>) -> Result<(Snapshot, String)> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let bad = |reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 16 || &bytes[..4] != SNAPSHOT_MAGIC {
        return Err(bad("not a snapshot file"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            expected: VERSION,
        });
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body)?;
    let cells = header.grid.cells();
    let payload = &bytes[16 + hlen..];
    if payload.len() != 4 * 8 * cells {
        return Err(bad("payload length does not match the grid"));
    }
    let mut fields = payload.chunks_exact(8 * cells).zip(header.units).map(|(chunk, units)| {
        let values = chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        ScalarField::new(header.grid, values, units)
    });
    let mut next = || fields.next().expect("four fields");
    let snap = Snapshot {
        log_k: next()?,
        p: next()?,
        ux: next()?,
        uy: next()?,
        meta: header.meta,
    };
    Ok((snap, header.tag))
}
