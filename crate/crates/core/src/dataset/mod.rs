//! Normalized multi-channel training arrays.
//!
//! Snapshots are turned into stored values in three fixed stages: noise is
//! added in physical units, values are min-max normalized with bounds frozen
//! from the training split, then unobserved cells are overwritten with `-1`.

mod archive;
mod io;

use std::collections::BTreeMap;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::LOG_PERMEABILITY_UNITS;
use crate::fom::{Snapshot, DISPLACEMENT_UNITS, PRESSURE_UNITS};
use crate::grid::{GridSpec, ScalarField};
use crate::rng::{sample_rng, sample_stream};

pub use archive::{read_snapshot, write_snapshot, SNAPSHOT_MAGIC};
pub use io::{read_dataset, write_dataset, FORMAT_VERSION, DATA_FILE, MANIFEST_FILE, MASK_FILE};

/// Value stored for unobserved cells.
pub const MISSING: f32 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    LogK,
    P,
    Ux,
    Uy,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::LogK, Channel::P, Channel::Ux, Channel::Uy];

    pub fn units(self) -> &'static str {
        match self {
            Channel::LogK => LOG_PERMEABILITY_UNITS,
            Channel::P => PRESSURE_UNITS,
            Channel::Ux | Channel::Uy => DISPLACEMENT_UNITS,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::LogK => "log_k",
            Channel::P => "p",
            Channel::Ux => "ux",
            Channel::Uy => "uy",
        }
    }

    pub fn of(self, snapshot: &Snapshot) -> &ScalarField {
        match self {
            Channel::LogK => &snapshot.log_k,
            Channel::P => &snapshot.p,
            Channel::Ux => &snapshot.ux,
            Channel::Uy => &snapshot.uy,
        }
    }
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Normalization bounds of one channel, in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub name: Channel,
    pub units: String,
    pub min: f64,
    pub max: f64,
}

impl ChannelSpec {
    pub fn new(name: Channel, min: f64, max: f64) -> Result<Self> {
        let spec = Self {
            name,
            units: name.units().to_string(),
            min,
            max,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.max > self.min) {
            return Err(Error::InvalidInput(format!(
                "degenerate bounds [{}, {}] for channel {}",
                self.min, self.max, self.name
            )));
        }
        Ok(())
    }

    /// Tightest bounds containing every field; a constant channel is widened
    /// by one unit so the map stays invertible.
    pub fn from_fields<'a>(name: Channel, fields: impl IntoIterator<Item = &'a ScalarField>) -> Result<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for f in fields {
            lo = lo.min(f.min());
            hi = hi.max(f.max());
        }
        if !lo.is_finite() {
            return Err(Error::InvalidInput(format!("no samples to bound channel {name}")));
        }
        if hi == lo {
            log::warn!("channel {name} is constant ({lo}); widening its bounds");
            hi = lo + 1.0;
        }
        Self::new(name, lo, hi)
    }
}

/// Unit-interval raster produced by [`normalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub values: Vec<f64>,
    /// Cells that fell outside the bounds and were clipped.
    pub clipped: usize,
}

pub fn normalize(field: &ScalarField, spec: &ChannelSpec) -> Result<Normalized> {
    spec.validate()?;
    if field.units != spec.units {
        return Err(Error::InvalidInput(format!(
            "channel {} expects {}, got {}",
            spec.name, spec.units, field.units
        )));
    }
    let span = spec.max - spec.min;
    let mut clipped = 0;
    let values = field
        .values
        .iter()
        .map(|&v| {
            let u = (v - spec.min) / span;
            if (0.0..=1.0).contains(&u) {
                u
            } else {
                clipped += 1;
                u.clamp(0.0, 1.0)
            }
        })
        .collect();
    Ok(Normalized { values, clipped })
}

/// Affine inverse of [`normalize`]. Masked entries must be filtered by the caller.
pub fn denormalize(raster: &[f64], spec: &ChannelSpec, grid: GridSpec) -> Result<ScalarField> {
    let span = spec.max - spec.min;
    ScalarField::new(
        grid,
        raster.iter().map(|&u| spec.min + u * span).collect(),
        spec.units.clone(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Noise level relative to the per-sample standard deviation.
    #[serde(default = "NoiseConfig::default_epsilon")]
    pub epsilon: f64,
    pub seed: u64,
}

impl NoiseConfig {
    fn default_epsilon() -> f64 {
        0.05
    }

    pub fn new(seed: u64) -> Self {
        Self {
            epsilon: Self::default_epsilon(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "noise level must be non-negative, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Adds `epsilon * SD(field) * N(0, 1)` to every cell. The draw depends only
/// on `(cfg.seed, sample_index, stream)`.
pub fn apply_noise(
    field: &ScalarField,
    cfg: &NoiseConfig,
    sample_index: u64,
    stream: u64,
) -> Result<ScalarField> {
    cfg.validate()?;
    let scale = cfg.epsilon * field.std_dev();
    if scale == 0.0 {
        return Ok(field.clone());
    }
    let mut rng = sample_stream(cfg.seed, sample_index, stream);
    let values = field
        .values
        .iter()
        .map(|&v| v + scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    ScalarField::new(field.grid, values, field.units.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Regular lattice with a common stride in both directions.
    Uniform,
    /// Seeded uniform subset of exactly `round(fraction * cells)` cells.
    Random,
}

/// Observed-cell raster, row-major like the fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub grid_nx: usize,
    pub grid_ny: usize,
    pub observed: Vec<bool>,
}

impl Mask {
    pub fn full(grid: GridSpec) -> Self {
        Self {
            grid_nx: grid.nx,
            grid_ny: grid.ny,
            observed: vec![true; grid.cells()],
        }
    }

    pub fn count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    pub fn cells(&self) -> usize {
        self.observed.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.observed.iter().map(|&o| o as u8).collect()
    }
}

/// Stride whose lattice density is closest to `fraction`; ties go to the finer lattice.
pub fn uniform_stride(grid: GridSpec, fraction: f64) -> usize {
    let n = grid.cells() as f64;
    let mut best = (1, f64::INFINITY);
    for s in 1..=grid.nx.max(grid.ny) {
        let count = grid.nx.div_ceil(s) * grid.ny.div_ceil(s);
        let gap = (count as f64 / n - fraction).abs();
        if gap < best.1 {
            best = (s, gap);
        }
    }
    best.0
}

pub fn make_mask(grid: GridSpec, fraction: f64, mode: MaskMode, seed: u64) -> Result<Mask> {
    grid.validate()?;
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "available fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let mut mask = Mask {
        grid_nx: grid.nx,
        grid_ny: grid.ny,
        observed: vec![false; grid.cells()],
    };
    match mode {
        MaskMode::Uniform => {
            let s = uniform_stride(grid, fraction);
            for j in (0..grid.ny).step_by(s) {
                for i in (0..grid.nx).step_by(s) {
                    mask.observed[grid.index(i, j)] = true;
                }
            }
        }
        MaskMode::Random => {
            let n = grid.cells();
            let keep = ((fraction * n as f64).round() as usize).min(n);
            let mut rng = sample_rng(seed, 0);
            for k in sample_indices(&mut rng, n, keep) {
                mask.observed[k] = true;
            }
        }
    }
    Ok(mask)
}

/// Sets unobserved cells to exactly `-1`.
pub fn apply_mask(raster: &mut [f64], mask: &Mask) -> Result<()> {
    if raster.len() != mask.cells() {
        return Err(Error::ShapeMismatch(format!(
            "raster of {} cells against a mask of {}",
            raster.len(),
            mask.cells()
        )));
    }
    for (v, &o) in raster.iter_mut().zip(&mask.observed) {
        if !o {
            *v = MISSING as f64;
        }
    }
    Ok(())
}

/// Generator input and target channels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Roles {
    pub inputs: Vec<Channel>,
    pub targets: Vec<Channel>,
}

impl Roles {
    /// `log_k -> targets`.
    pub fn forward(targets: &[Channel]) -> Self {
        Self {
            inputs: vec![Channel::LogK],
            targets: targets.to_vec(),
        }
    }

    /// `observations -> log_k`.
    pub fn inverse(observations: &[Channel]) -> Self {
        Self {
            inputs: observations.to_vec(),
            targets: vec![Channel::LogK],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() || self.targets.is_empty() {
            return Err(Error::Config("roles need at least one input and one target".into()));
        }
        let mut all: Vec<Channel> = self.inputs.iter().chain(&self.targets).copied().collect();
        all.sort();
        all.dedup();
        if all.len() != self.inputs.len() + self.targets.len() {
            return Err(Error::Config("a channel appears twice in the roles".into()));
        }
        Ok(())
    }

    /// Stored channel order: inputs, then targets.
    pub fn channels(&self) -> Vec<Channel> {
        self.inputs.iter().chain(&self.targets).copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskConfig {
    pub fraction: f64,
    pub mode: MaskMode,
    pub seed: u64,
}

/// Observation mask shared by every sample of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMask {
    pub channels: Vec<Channel>,
    pub mask: Mask,
}

/// Normalized samples plus the metadata needed to interpret them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub grid: GridSpec,
    pub channels: Vec<ChannelSpec>,
    pub roles: Roles,
    pub samples: usize,
    /// Sample-major, then channel, then row, then column.
    pub data: Vec<f32>,
    pub mask: Option<DatasetMask>,
    pub noise: Option<NoiseConfig>,
    pub seeds: BTreeMap<String, u64>,
}

impl Dataset {
    pub fn channel_index(&self, c: Channel) -> Option<usize> {
        self.channels.iter().position(|s| s.name == c)
    }

    pub fn spec(&self, c: Channel) -> Option<&ChannelSpec> {
        self.channels.iter().find(|s| s.name == c)
    }

    pub fn values_per_sample(&self) -> usize {
        self.channels.len() * self.grid.cells()
    }

    pub fn sample(&self, s: usize) -> &[f32] {
        let n = self.values_per_sample();
        &self.data[s * n..(s + 1) * n]
    }

    pub fn channel(&self, s: usize, c: Channel) -> Result<&[f32]> {
        let k = self
            .channel_index(c)
            .ok_or_else(|| Error::InvalidInput(format!("dataset has no channel {c}")))?;
        let cells = self.grid.cells();
        Ok(&self.sample(s)[k * cells..(k + 1) * cells])
    }

    /// Concatenated rasters of `channels` for sample `s`.
    pub fn stack(&self, s: usize, channels: &[Channel]) -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(channels.len() * self.grid.cells());
        for &c in channels {
            out.extend_from_slice(self.channel(s, c)?);
        }
        Ok(out)
    }

    pub fn inputs(&self, s: usize) -> Result<Vec<f32>> {
        self.stack(s, &self.roles.inputs)
    }

    pub fn targets(&self, s: usize) -> Result<Vec<f32>> {
        self.stack(s, &self.roles.targets)
    }

    /// Physical-unit field of channel `c` in sample `s` (masked cells included as stored).
    pub fn physical(&self, s: usize, c: Channel) -> Result<ScalarField> {
        let spec = self
            .spec(c)
            .ok_or_else(|| Error::InvalidInput(format!("dataset has no channel {c}")))?;
        let raw: Vec<f64> = self.channel(s, c)?.iter().map(|&v| v as f64).collect();
        denormalize(&raw, spec, self.grid)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.roles.validate()?;
        for spec in &self.channels {
            spec.validate()?;
        }
        let stored: Vec<Channel> = self.channels.iter().map(|s| s.name).collect();
        if stored != self.roles.channels() {
            return Err(Error::Config(format!(
                "channel list {stored:?} does not match roles {:?}",
                self.roles.channels()
            )));
        }
        if self.data.len() != self.samples * self.values_per_sample() {
            return Err(Error::ShapeMismatch(format!(
                "{} stored values for {} samples of {} values",
                self.data.len(),
                self.samples,
                self.values_per_sample()
            )));
        }
        if let Some(m) = &self.mask {
            if m.mask.cells() != self.grid.cells() {
                return Err(Error::ShapeMismatch("mask does not match the grid".into()));
            }
            if let Some(c) = m.channels.iter().find(|c| self.channel_index(**c).is_none()) {
                return Err(Error::Config(format!("masked channel {c} is not stored")));
            }
        }
        if let Some(v) = self.data.iter().find(|&&v| !(v == MISSING || (0.0..=1.0).contains(&v))) {
            return Err(Error::InvalidInput(format!("stored value {v} is neither in [0, 1] nor -1")));
        }
        Ok(())
    }
}

/// How snapshots become a [`Dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct AssemblyOptions {
    pub roles: Roles,
    /// Observation mask, applied to the input channels.
    pub mask: Option<Mask>,
    /// Noise on the input channels.
    pub noise: Option<NoiseConfig>,
    /// Global index of the first snapshot; keeps noise draws of different splits apart.
    pub first_index: u64,
    pub seeds: BTreeMap<String, u64>,
}

impl AssemblyOptions {
    pub fn new(roles: Roles) -> Self {
        Self {
            roles,
            mask: None,
            noise: None,
            first_index: 0,
            seeds: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assembled {
    pub dataset: Dataset,
    /// Out-of-bounds cells clipped to the unit interval, per stored channel.
    pub clipped: Vec<usize>,
}

/// Physical fields of every stored channel after the noise stage.
fn noised_channels(
    snapshots: &[Snapshot],
    opts: &AssemblyOptions,
) -> Result<Vec<Vec<ScalarField>>> {
    let channels = opts.roles.channels();
    snapshots
        .iter()
        .enumerate()
        .map(|(s, snap)| {
            channels
                .iter()
                .map(|&c| {
                    let field = c.of(snap);
                    match (&opts.noise, opts.roles.inputs.contains(&c)) {
                        (Some(noise), true) => {
                            apply_noise(field, noise, opts.first_index + s as u64, c as u64)
                        }
                        _ => Ok(field.clone()),
                    }
                })
                .collect()
        })
        .collect()
}

/// Bounds of every stored channel over a training split, after noise.
pub fn training_bounds(snapshots: &[Snapshot], opts: &AssemblyOptions) -> Result<Vec<ChannelSpec>> {
    opts.roles.validate()?;
    let fields = noised_channels(snapshots, opts)?;
    opts.roles
        .channels()
        .iter()
        .enumerate()
        .map(|(k, &c)| ChannelSpec::from_fields(c, fields.iter().map(|f| &f[k])))
        .collect()
}

/// Noise, then normalize against `bounds`, then mask.
pub fn assemble(
    snapshots: &[Snapshot],
    bounds: &[ChannelSpec],
    opts: &AssemblyOptions,
) -> Result<Assembled> {
    opts.roles.validate()?;
    let channels = opts.roles.channels();
    let names: Vec<Channel> = bounds.iter().map(|b| b.name).collect();
    if names != channels {
        return Err(Error::Config(format!(
            "bounds cover {names:?} but the roles store {channels:?}"
        )));
    }
    let grid = match snapshots.first() {
        Some(s) => s.log_k.grid,
        None => {
            return Err(Error::InvalidInput(
                "use Dataset::empty for a dataset without samples".into(),
            ))
        }
    };
    if let Some(m) = &opts.mask {
        if m.cells() != grid.cells() {
            return Err(Error::ShapeMismatch("mask does not match the grid".into()));
        }
    }
    let fields = noised_channels(snapshots, opts)?;
    let mut data = Vec::with_capacity(snapshots.len() * channels.len() * grid.cells());
    let mut clipped = vec![0; channels.len()];
    for sample in &fields {
        for (k, (field, spec)) in sample.iter().zip(bounds).enumerate() {
            if field.grid != grid {
                return Err(Error::ShapeMismatch("snapshots live on different grids".into()));
            }
            let mut norm = normalize(field, spec)?;
            clipped[k] += norm.clipped;
            if let (Some(mask), true) = (&opts.mask, opts.roles.inputs.contains(&spec.name)) {
                apply_mask(&mut norm.values, mask)?;
            }
            data.extend(norm.values.iter().map(|&v| v as f32));
        }
    }
    for (k, &n) in clipped.iter().enumerate() {
        if n > 0 {
            log::warn!("clipped {n} out-of-bounds values of channel {}", channels[k]);
        }
    }
    let dataset = Dataset {
        grid,
        channels: bounds.to_vec(),
        roles: opts.roles.clone(),
        samples: snapshots.len(),
        data,
        mask: opts.mask.clone().map(|mask| DatasetMask {
            channels: opts.roles.inputs.clone(),
            mask,
        }),
        noise: opts.noise,
        seeds: opts.seeds.clone(),
    };
    dataset.validate()?;
    Ok(Assembled { dataset, clipped })
}

impl Dataset {
    /// Zero-sample dataset with a valid manifest.
    pub fn empty(grid: GridSpec, bounds: Vec<ChannelSpec>, opts: &AssemblyOptions) -> Result<Self> {
        let ds = Dataset {
            grid,
            channels: bounds,
            roles: opts.roles.clone(),
            samples: 0,
            data: Vec::new(),
            mask: opts.mask.clone().map(|mask| DatasetMask {
                channels: opts.roles.inputs.clone(),
                mask,
            }),
            noise: opts.noise,
            seeds: opts.seeds.clone(),
        };
        ds.validate()?;
        Ok(ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> GridSpec {
        GridSpec::unit_square(n).unwrap()
    }

    #[test]
    fn normalize_endpoints_and_pressure_example() {
        let spec = ChannelSpec::new(Channel::P, 0.0, 1000.0).unwrap();
        let f = ScalarField::new(grid(2), vec![0.0, 1000.0, 500.0, 250.0], "Pa").unwrap();
        let n = normalize(&f, &spec).unwrap();
        assert_eq!(n.values, vec![0.0, 1.0, 0.5, 0.25]);
        assert_eq!(n.clipped, 0);
    }

    #[test]
    fn denormalize_midpoint() {
        let spec = ChannelSpec::new(Channel::LogK, -12.0, -8.0).unwrap();
        let f = denormalize(&[0.0, 0.5, 1.0, 0.25], &spec, grid(2)).unwrap();
        assert_eq!(f.values, vec![-12.0, -10.0, -8.0, -11.0]);
        assert_eq!(f.units, LOG_PERMEABILITY_UNITS);
    }

    #[test]
    fn out_of_range_values_are_clipped_and_counted() {
        let spec = ChannelSpec::new(Channel::P, 0.0, 1000.0).unwrap();
        let f = ScalarField::new(grid(2), vec![-5.0, 1001.0, 10.0, 20.0], "Pa").unwrap();
        let n = normalize(&f, &spec).unwrap();
        assert_eq!(n.values[0], 0.0);
        assert_eq!(n.values[1], 1.0);
        assert_eq!(n.clipped, 2);
    }

    #[test]
    fn degenerate_bounds_rejected() {
        assert!(ChannelSpec::new(Channel::P, 1.0, 1.0).is_err());
        assert!(ChannelSpec::new(Channel::P, 2.0, 1.0).is_err());
    }

    #[test]
    fn mask_counts() {
        let g = grid(128);
        assert_eq!(make_mask(g, 1.0, MaskMode::Uniform, 0).unwrap().count(), 16384);
        assert_eq!(make_mask(g, 1.0, MaskMode::Random, 0).unwrap().count(), 16384);
        let quarter = make_mask(g, 0.25, MaskMode::Uniform, 0).unwrap();
        assert_eq!(quarter.count(), 4096);
        assert!(quarter.observed[g.index(0, 0)] && quarter.observed[g.index(2, 4)]);
        assert!(!quarter.observed[g.index(1, 0)]);
        assert_eq!(make_mask(g, 0.03, MaskMode::Random, 7).unwrap().count(), 492);
        assert!(make_mask(g, 0.0, MaskMode::Random, 7).is_err());
        assert!(make_mask(g, 1.5, MaskMode::Uniform, 7).is_err());
    }

    #[test]
    fn random_mask_is_seeded() {
        let g = grid(32);
        let a = make_mask(g, 0.1, MaskMode::Random, 3).unwrap();
        assert_eq!(a, make_mask(g, 0.1, MaskMode::Random, 3).unwrap());
        assert_ne!(a, make_mask(g, 0.1, MaskMode::Random, 4).unwrap());
    }

    #[test]
    fn mask_application() {
        let g = grid(3);
        let mut r: Vec<f64> = (0..9).map(|k| k as f64 / 10.0).collect();
        let orig = r.clone();
        apply_mask(&mut r, &Mask::full(g)).unwrap();
        assert_eq!(r, orig);
        let mut single = Mask::full(g);
        single.observed.iter_mut().for_each(|o| *o = false);
        single.observed[4] = true;
        apply_mask(&mut r, &single).unwrap();
        for (k, v) in r.iter().enumerate() {
            if k == 4 {
                assert_eq!(*v, 0.4);
            } else {
                assert_eq!(*v, -1.0);
            }
        }
    }

    #[test]
    fn noise_identities() {
        let g = grid(8);
        let f = ScalarField::from_fn(g, "Pa", |x, y| x + 2.0 * y).unwrap();
        let zero = NoiseConfig {
            epsilon: 0.0,
            seed: 1,
        };
        assert_eq!(apply_noise(&f, &zero, 0, 0).unwrap(), f);
        let c = ScalarField::constant(g, 3.0, "Pa").unwrap();
        assert_eq!(apply_noise(&c, &NoiseConfig::new(1), 0, 0).unwrap(), c);
        let a = apply_noise(&f, &NoiseConfig::new(1), 5, 0).unwrap();
        assert_eq!(a, apply_noise(&f, &NoiseConfig::new(1), 5, 0).unwrap());
        assert_ne!(a, apply_noise(&f, &NoiseConfig::new(1), 6, 0).unwrap());
    }

    #[test]
    fn noise_scale_matches_epsilon() {
        let g = grid(128);
        let f = ScalarField::from_fn(g, "Pa", |x, y| 1000.0 * (1.0 - y) + 50.0 * x).unwrap();
        let out = apply_noise(&f, &NoiseConfig::new(9), 0, 0).unwrap();
        let diff = ScalarField::new(
            g,
            out.values.iter().zip(&f.values).map(|(a, b)| a - b).collect(),
            "Pa",
        )
        .unwrap();
        let target = 0.05 * f.std_dev();
        assert!((diff.std_dev() / target - 1.0).abs() < 0.05);
    }

    #[test]
    fn roles_reject_duplicates() {
        let r = Roles {
            inputs: vec![Channel::P],
            targets: vec![Channel::P],
        };
        assert!(r.validate().is_err());
        assert!(Roles::forward(&[Channel::P]).validate().is_ok());
    }
}
