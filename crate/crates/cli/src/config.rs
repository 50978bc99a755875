//! Experiment recipe: one JSON file, unknown keys rejected.

use std::path::{Path, PathBuf};

use porogan_cgan::{Direction, TrainConfig};
use porogan_core::dataset::{Channel, MaskConfig, NoiseConfig, Roles};
use porogan_core::fields::{FieldConfig, FieldTransform, Kernel};
use porogan_core::fom::{BoundaryConditions, MaterialParams};
use porogan_core::GridSpec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One family of log-permeability fields; samples are dealt to families in turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldKind {
    pub mean: f64,
    pub variance: f64,
    pub length_scale: f64,
    pub transform: FieldTransform,
}

impl Default for FieldKind {
    fn default() -> Self {
        let g = FieldConfig::gaussian(0);
        Self {
            mean: g.mean,
            variance: g.variance,
            length_scale: g.length_scale,
            transform: FieldTransform::None,
        }
    }
}

impl FieldKind {
    pub fn field_config(&self, seed: u64) -> FieldConfig {
        FieldConfig {
            mean: self.mean,
            variance: self.variance,
            length_scale: self.length_scale,
            kernel: Kernel::SquaredExponential,
            transform: self.transform,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub direction: Direction,
    /// Targets of the forward map, or observations of the inverse map.
    pub channels: Vec<Channel>,
    #[serde(default)]
    pub mask: Option<MaskConfig>,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            direction: Direction::Forward,
            channels: vec![Channel::P],
            mask: None,
            noise: None,
        }
    }
}

impl DatasetConfig {
    pub fn roles(&self) -> Roles {
        match self.direction {
            Direction::Forward => Roles::forward(&self.channels),
            Direction::Inverse => Roles::inverse(&self.channels),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub train: usize,
    pub test: usize,
}

impl Split {
    pub fn total(&self) -> usize {
        self.train + self.test
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Run directory holding snapshots, datasets, checkpoints and reports.
    pub out: PathBuf,
    pub grid: GridSpec,
    pub fields: Vec<FieldKind>,
    pub material: MaterialParams,
    pub boundary: BoundaryConditions,
    pub dataset: DatasetConfig,
    pub split: Split,
    pub train: TrainConfig,
    /// Field seed of global sample `i` is `seed + i`.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("run"),
            grid: GridSpec::unit_square(64).expect("valid grid"),
            fields: vec![FieldKind::default()],
            material: MaterialParams::default(),
            boundary: BoundaryConditions::default(),
            dataset: DatasetConfig::default(),
            split: Split { train: 500, test: 100 },
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

/// Command-line values that replace individual config keys.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub direction: Option<Direction>,
    pub resolution: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn apply(mut self, o: &Overrides) -> Result<Self> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(direction) = o.direction {
            self.dataset.direction = direction;
        }
        if let Some(n) = o.resolution {
            self.grid = GridSpec::new(n, n, self.grid.lx, self.grid.ly)
                .map_err(|e| Error::Usage(format!("--resolution: {e}")))?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let usage = |e: &dyn std::fmt::Display| Error::Usage(e.to_string());
        self.grid.validate().map_err(|e| usage(&e))?;
        if self.fields.is_empty() {
            return Err(Error::Usage("at least one field kind is required".into()));
        }
        for f in &self.fields {
            f.field_config(self.seed).validate().map_err(|e| usage(&e))?;
        }
        self.material.validate().map_err(|e| usage(&e))?;
        self.dataset.roles().validate().map_err(|e| usage(&e))?;
        if let Some(m) = &self.dataset.mask {
            if !(m.fraction > 0.0 && m.fraction <= 1.0) {
                return Err(Error::Usage(format!("mask fraction {} outside (0, 1]", m.fraction)));
            }
        }
        if let Some(n) = &self.dataset.noise {
            n.validate().map_err(|e| usage(&e))?;
        }
        self.train.validate().map_err(|e| usage(&e))?;
        Ok(())
    }

    pub fn snapshot_dir(&self) -> PathBuf {
        self.out.join("snapshots")
    }

    pub fn train_dir(&self) -> PathBuf {
        self.out.join("train")
    }

    pub fn test_dir(&self) -> PathBuf {
        self.out.join("test")
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.out.join("checkpoints")
    }

    pub fn final_checkpoint(&self) -> PathBuf {
        self.checkpoint_dir().join("final.pgck")
    }

    pub fn report_path(&self) -> PathBuf {
        self.out.join("train_report.jsonl")
    }

    /// Family index of global sample `i`.
    pub fn kind_of(&self, i: usize) -> usize {
        i % self.fields.len()
    }
}
