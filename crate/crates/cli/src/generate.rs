//! Snapshot generation and dataset assembly.
//!
//! Every solved sample is archived under `snapshots/` before the datasets are
//! assembled, so an interrupted run resumes where it stopped.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use log::{info, warn};
use porogan_core::dataset::{
    assemble, make_mask, read_snapshot, training_bounds, write_dataset, write_snapshot,
    AssemblyOptions, ChannelSpec, Dataset,
};
use porogan_core::fields::{apply_transform, CirculantEmbedding};
use porogan_core::fom::{solve_steady_hm, Snapshot};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub train: usize,
    pub test: usize,
    /// Successful samples per field kind.
    pub per_kind: Vec<usize>,
    pub reused: usize,
    pub solved: usize,
    pub failures: Vec<Failure>,
    /// Test values clipped to the training bounds, per stored channel.
    pub clipped_test: Vec<usize>,
}

pub fn snapshot_path(cfg: &ExperimentConfig, index: usize) -> PathBuf {
    cfg.snapshot_dir().join(format!("sample_{index:07}.pgsn"))
}

/// Identifies everything a snapshot depends on; a stale archive entry is re-solved.
fn tag(cfg: &ExperimentConfig, index: usize) -> Result<String> {
    let field = cfg.fields[cfg.kind_of(index)].field_config(cfg.seed + index as u64);
    Ok(serde_json::to_string(&(field, cfg.grid, cfg.material, cfg.boundary))?)
}

/// One embedding per field kind; the embedding does not depend on the seed.
pub fn embeddings(cfg: &ExperimentConfig) -> Result<Vec<CirculantEmbedding>> {
    cfg.fields
        .iter()
        .map(|k| Ok(CirculantEmbedding::new(&k.field_config(cfg.seed), cfg.grid)?))
        .collect()
}

/// Field generation and full-order solve of global sample `index`.
pub fn solve_sample(cfg: &ExperimentConfig, emb: &[CirculantEmbedding], index: usize) -> Result<Snapshot> {
    let kind = cfg.kind_of(index);
    let field = cfg.fields[kind].field_config(cfg.seed + index as u64);
    let log_k = apply_transform(&emb[kind].sample(field.seed), &field)?;
    Ok(solve_steady_hm(&log_k, &cfg.material, &cfg.boundary)?)
}

enum Outcome {
    Reused(Snapshot),
    Solved(Snapshot),
    Failed(String),
}

fn obtain(cfg: &ExperimentConfig, emb: &[CirculantEmbedding], index: usize) -> Outcome {
    let path = snapshot_path(cfg, index);
    let tag = match tag(cfg, index) {
        Ok(t) => t,
        Err(e) => return Outcome::Failed(e.to_string()),
    };
    if path.exists() {
        match read_snapshot(&path) {
            Ok((snap, found)) if found == tag => return Outcome::Reused(snap),
            Ok(_) => info!("sample {index}: archived snapshot is stale, solving again"),
            Err(e) => warn!("sample {index}: unreadable archive entry ({e}), solving again"),
        }
    }
    match solve_sample(cfg, emb, index).and_then(|snap| {
        write_snapshot(&path, &snap, &tag)?;
        Ok(snap)
    }) {
        Ok(snap) => Outcome::Solved(snap),
        Err(e) => Outcome::Failed(e.to_string()),
    }
}

/// Solves (or reloads) samples `range`, in index order; failures are recorded, not fatal.
pub fn collect_snapshots(
    cfg: &ExperimentConfig,
    range: std::ops::Range<usize>,
) -> Result<(Vec<(usize, Snapshot)>, usize, usize, Vec<Failure>)> {
    fs::create_dir_all(cfg.snapshot_dir())?;
    let emb = embeddings(cfg)?;
    let outcomes: Vec<(usize, Outcome)> = range.into_par_iter().map(|i| (i, obtain(cfg, &emb, i))).collect();
    let (mut reused, mut solved) = (0, 0);
    let mut snaps = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (index, outcome) in outcomes {
        match outcome {
            Outcome::Reused(s) => {
                reused += 1;
                snaps.push((index, s));
            }
            Outcome::Solved(s) => {
                solved += 1;
                snaps.push((index, s));
            }
            Outcome::Failed(error) => {
                warn!("sample {index} failed: {error}");
                failures.push(Failure { index, error });
            }
        }
    }
    Ok((snaps, reused, solved, failures))
}

/// Assembly options of the configured dataset, shared by both splits.
pub fn assembly_options(cfg: &ExperimentConfig) -> Result<AssemblyOptions> {
    let mut opts = AssemblyOptions::new(cfg.dataset.roles());
    let mut seeds = BTreeMap::from([("fields".to_string(), cfg.seed)]);
    if let Some(m) = &cfg.dataset.mask {
        opts.mask = Some(make_mask(cfg.grid, m.fraction, m.mode, m.seed)?);
        seeds.insert("mask".into(), m.seed);
    }
    if let Some(n) = cfg.dataset.noise {
        opts.noise = Some(n);
        seeds.insert("noise".into(), n.seed);
    }
    opts.seeds = seeds;
    Ok(opts)
}

/// Training-split bounds; without training samples every channel gets unit bounds.
pub fn bounds_for(snaps: &[Snapshot], opts: &AssemblyOptions) -> Result<Vec<ChannelSpec>> {
    if snaps.is_empty() {
        return Ok(opts
            .roles
            .channels()
            .into_iter()
            .map(|c| ChannelSpec::new(c, 0.0, 1.0))
            .collect::<porogan_core::Result<_>>()?);
    }
    Ok(training_bounds(snaps, opts)?)
}

/// Normalized dataset of `snaps` under frozen `bounds`; returns clipped counts too.
pub fn build_dataset(
    cfg: &ExperimentConfig,
    snaps: &[Snapshot],
    bounds: &[ChannelSpec],
    opts: &AssemblyOptions,
) -> Result<(Dataset, Vec<usize>)> {
    if snaps.is_empty() {
        return Ok((Dataset::empty(cfg.grid, bounds.to_vec(), opts)?, vec![0; bounds.len()]));
    }
    let a = assemble(snaps, bounds, opts)?;
    Ok((a.dataset, a.clipped))
}

/// Train and test datasets from a snapshot list ordered by global index.
pub fn split_datasets(
    cfg: &ExperimentConfig,
    snaps: &[(usize, Snapshot)],
) -> Result<(Dataset, Dataset, Vec<usize>)> {
    let opts = assembly_options(cfg)?;
    let (train, test): (Vec<_>, Vec<_>) = snaps.iter().partition(|(i, _)| *i < cfg.split.train);
    let train: Vec<Snapshot> = train.into_iter().map(|(_, s)| s.clone()).collect();
    let test: Vec<Snapshot> = test.into_iter().map(|(_, s)| s.clone()).collect();
    let bounds = bounds_for(&train, &opts)?;
    let (train_ds, _) = build_dataset(cfg, &train, &bounds, &opts)?;
    let test_opts = AssemblyOptions {
        first_index: cfg.split.train as u64,
        ..opts
    };
    let (test_ds, clipped) = build_dataset(cfg, &test, &bounds, &test_opts)?;
    Ok((train_ds, test_ds, clipped))
}

/// Generates every sample of the configured splits and writes `train/` and `test/`.
pub fn generate(cfg: &ExperimentConfig) -> Result<GenerateSummary> {
    let total = cfg.split.total();
    info!("generating {total} samples into {}", cfg.out.display());
    let (snaps, reused, solved, failures) = collect_snapshots(cfg, 0..total)?;
    let (train, test, clipped_test) = split_datasets(cfg, &snaps)?;
    write_dataset(&train, cfg.train_dir())?;
    write_dataset(&test, cfg.test_dir())?;
    let mut per_kind = vec![0; cfg.fields.len()];
    for (i, _) in &snaps {
        per_kind[cfg.kind_of(*i)] += 1;
    }
    let summary = GenerateSummary {
        train: train.samples,
        test: test.samples,
        per_kind,
        reused,
        solved,
        failures,
        clipped_test,
    };
    fs::write(cfg.out.join("generate_summary.json"), serde_json::to_vec_pretty(&summary)?)?;
    if !summary.failures.is_empty() {
        warn!("{} samples failed; see generate_summary.json", summary.failures.len());
    }
    Ok(summary)
}
