//! Heterogeneous log10-permeability fields.
//!
//! Stationary Gaussian random fields are synthesized exactly by circulant
//! embedding: the covariance is sampled on a periodic torus large enough that
//! its 2-D DFT is non-negative, and a complex white-noise vector is colored by
//! the square root of that spectrum. Two marginal transforms then reshape the
//! Gaussian field without changing its first two moments: an arcsine
//! (bimodal) map and the Zinn & Harvey connectivity map.

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::{erf, erfc};
use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::rng::sample_rng;

pub const LOG_PERMEABILITY_UNITS: &str = "log(m^2)";
pub const PERMEABILITY_UNITS: &str = "m^2";

/// Normal-score values are clipped to this magnitude so the fold of the
/// Zinn & Harvey map never produces an infinite tail.
pub const NORMAL_SCORE_CLIP: f64 = 8.0;

/// Relative tolerance below which negative embedding eigenvalues are treated as
/// round-off and clipped to zero.
const EMBEDDING_TOLERANCE: f64 = 1e-8;

/// Largest torus side tried before giving up on the embedding.
const MAX_EMBEDDING_SIDE: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    High,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FieldTransform {
    #[default]
    None,
    Bimodal,
    ZinnHarvey { connectivity: Connectivity },
}

impl FieldTransform {
    pub fn label(&self) -> &'static str {
        match self {
            FieldTransform::None => "gaussian",
            FieldTransform::Bimodal => "bimodal",
            FieldTransform::ZinnHarvey { .. } => "zinn_harvey",
        }
    }
}

/// Covariance family of the underlying Gaussian field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// `C(r) = variance * exp(-r^2 / (2 l^2))`
    #[default]
    SquaredExponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    /// Mean of log10-permeability, log(m^2).
    pub mean: f64,
    /// Variance of log10-permeability, log(m^4).
    pub variance: f64,
    /// Correlation length, m.
    pub length_scale: f64,
    #[serde(default)]
    pub kernel: Kernel,
    #[serde(default)]
    pub transform: FieldTransform,
    pub seed: u64,
}

impl FieldConfig {
    /// Example 1 parameters: mean -12, unit variance, length scale 1 m.
    pub fn gaussian(seed: u64) -> Self {
        Self {
            mean: -12.0,
            variance: 1.0,
            length_scale: 1.0,
            kernel: Kernel::SquaredExponential,
            transform: FieldTransform::None,
            seed,
        }
    }

    pub fn with_transform(mut self, transform: FieldTransform) -> Self {
        self.transform = transform;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "field variance must be positive, got {}",
                self.variance
            )));
        }
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "length scale must be positive, got {}",
                self.length_scale
            )));
        }
        if !self.mean.is_finite() {
            return Err(Error::InvalidInput("field mean must be finite".into()));
        }
        Ok(())
    }

    pub fn covariance(&self, r: f64) -> f64 {
        match self.kernel {
            Kernel::SquaredExponential => {
                self.variance * (-(r * r) / (2.0 * self.length_scale * self.length_scale)).exp()
            }
        }
    }
}

/// Precomputed circulant embedding for one `(grid, variance, length scale)`.
///
/// Building the embedding costs one FFT of the torus plus the eigenvalue
/// check; each sample afterwards costs one more FFT.
pub struct CirculantEmbedding {
    grid: GridSpec,
    mean: f64,
    size_x: usize,
    size_y: usize,
    /// `sqrt(lambda / (size_x * size_y))`, row-major over the torus.
    amplitude: Vec<f64>,
    fft_x: Arc<dyn Fft<f64>>,
    fft_y: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CirculantEmbedding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CirculantEmbedding")
            .field("grid", &self.grid)
            .field("size_x", &self.size_x)
            .field("size_y", &self.size_y)
            .finish()
    }
}

impl CirculantEmbedding {
    pub fn new(config: &FieldConfig, grid: GridSpec) -> Result<Self> {
        config.validate()?;
        grid.validate()?;
        let mut size_x = (2 * grid.nx).next_power_of_two();
        let mut size_y = (2 * grid.ny).next_power_of_two();
        let mut planner = FftPlanner::new();
        loop {
            let fft_x = planner.plan_fft_forward(size_x);
            let fft_y = planner.plan_fft_forward(size_y);
            let (min_eig, max_eig, eig) =
                embedding_spectrum(config, &grid, size_x, size_y, &fft_x, &fft_y);
            if min_eig >= -EMBEDDING_TOLERANCE * max_eig {
                let scale = 1.0 / (size_x * size_y) as f64;
                let amplitude = eig.iter().map(|&l| (l.max(0.0) * scale).sqrt()).collect();
                return Ok(Self {
                    grid,
                    mean: config.mean,
                    size_x,
                    size_y,
                    amplitude,
                    fft_x,
                    fft_y,
                });
            }
            if size_x >= MAX_EMBEDDING_SIDE || size_y >= MAX_EMBEDDING_SIDE {
                return Err(Error::EmbeddingFailed {
                    min_eigenvalue: min_eig,
                    max_eigenvalue: max_eig,
                    size_x,
                    size_y,
                });
            }
            log::debug!(
                "embedding {size_x}x{size_y} not positive (min {min_eig:e}, max {max_eig:e}); enlarging"
            );
            size_x *= 2;
            size_y *= 2;
        }
    }

    pub fn embedding_size(&self) -> (usize, usize) {
        (self.size_x, self.size_y)
    }

    /// Draws one realization from the generator seeded with `seed`.
    pub fn sample(&self, seed: u64) -> ScalarField {
        let mut rng = sample_rng(seed, 0);
        let mut buf: Vec<Complex64> = self
            .amplitude
            .iter()
            .map(|&a| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(a * re, a * im)
            })
            .collect();
        fft2(&mut buf, self.size_x, self.size_y, &self.fft_x, &self.fft_y);
        let grid = self.grid;
        let mut values = Vec::with_capacity(grid.cells());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                values.push(self.mean + buf[j * self.size_x + i].re);
            }
        }
        ScalarField {
            grid,
            values,
            units: LOG_PERMEABILITY_UNITS.into(),
        }
    }
}

fn embedding_spectrum(
    config: &FieldConfig,
    grid: &GridSpec,
    size_x: usize,
    size_y: usize,
    fft_x: &Arc<dyn Fft<f64>>,
    fft_y: &Arc<dyn Fft<f64>>,
) -> (f64, f64, Vec<f64>) {
    let (dx, dy) = (grid.dx(), grid.dy());
    let mut buf = Vec::with_capacity(size_x * size_y);
    for j in 0..size_y {
        let ry = j.min(size_y - j) as f64 * dy;
        for i in 0..size_x {
            let rx = i.min(size_x - i) as f64 * dx;
            buf.push(Complex64::new(config.covariance((rx * rx + ry * ry).sqrt()), 0.0));
        }
    }
    fft2(&mut buf, size_x, size_y, fft_x, fft_y);
    let eig: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max, eig)
}

/// In-place 2-D forward DFT of a row-major `size_y x size_x` buffer.
fn fft2(
    buf: &mut [Complex64],
    size_x: usize,
    size_y: usize,
    fft_x: &Arc<dyn Fft<f64>>,
    fft_y: &Arc<dyn Fft<f64>>,
) {
    fft_x.process(buf);
    let mut column = vec![Complex64::new(0.0, 0.0); size_y];
    for i in 0..size_x {
        for (j, c) in column.iter_mut().enumerate() {
            *c = buf[j * size_x + i];
        }
        fft_y.process(&mut column);
        for (j, c) in column.iter().enumerate() {
            buf[j * size_x + i] = *c;
        }
    }
}

/// Stationary Gaussian log-permeability field with the configured covariance.
/// The configured transform is ignored; see [`generate_log_k`].
pub fn gaussian_log_k(config: &FieldConfig, grid: GridSpec) -> Result<ScalarField> {
    Ok(CirculantEmbedding::new(config, grid)?.sample(config.seed))
}

/// Gaussian field followed by the configured marginal transform, using the
/// configured mean and standard deviation as the transform's moments.
pub fn generate_log_k(config: &FieldConfig, grid: GridSpec) -> Result<ScalarField> {
    let gaussian = gaussian_log_k(config, grid)?;
    apply_transform(&gaussian, config)
}

pub fn apply_transform(gaussian: &ScalarField, config: &FieldConfig) -> Result<ScalarField> {
    let std_dev = config.variance.sqrt();
    match config.transform {
        FieldTransform::None => Ok(gaussian.clone()),
        FieldTransform::Bimodal => bimodal_transform(gaussian, config.mean, std_dev),
        FieldTransform::ZinnHarvey { connectivity } => {
            zinn_harvey_transform(gaussian, config.mean, std_dev, connectivity)
        }
    }
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

fn check_std(std_dev: f64) -> Result<()> {
    if std_dev > 0.0 && std_dev.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "standard deviation must be positive, got {std_dev}"
        )))
    }
}

/// Arcsine (bimodal) marginal: `m - s * sqrt(2) * cos(pi * Phi(z))`, `z = (y - m) / s`.
///
/// `Phi(z)` is uniform for Gaussian input and `Var[cos(pi U)] = 1/2`, so the
/// output keeps mean `m` and variance `s^2`; its density peaks at the support
/// edges `m +- sqrt(2) s`.
pub fn bimodal_transform(field: &ScalarField, mean: f64, std_dev: f64) -> Result<ScalarField> {
    check_std(std_dev)?;
    let normal = standard_normal();
    field.map(field.units.clone(), |y| {
        let u = normal.cdf((y - mean) / std_dev);
        mean - std_dev * SQRT_2 * (PI * u).cos()
    })
}

/// Zinn & Harvey map: fold `w = |z|`, back-transform `v = Phi^-1(2 Phi(w) - 1)`,
/// negate for high connectivity, rescale to `(m, s^2)`.
pub fn zinn_harvey_transform(
    field: &ScalarField,
    mean: f64,
    std_dev: f64,
    connectivity: Connectivity,
) -> Result<ScalarField> {
    check_std(std_dev)?;
    let sign = match connectivity {
        Connectivity::High => -1.0,
        Connectivity::Low => 1.0,
    };
    field.map(field.units.clone(), |y| {
        let w = ((y - mean) / std_dev).abs();
        mean + std_dev * sign * folded_normal_score(w)
    })
}

/// `Phi^-1(2 Phi(w) - 1)` for `w >= 0`, clipped to `+-NORMAL_SCORE_CLIP`.
///
/// `2 Phi(w) - 1 = erf(w / sqrt 2)`; the upper half is evaluated through
/// `erfc` to keep precision in the tail.
fn folded_normal_score(w: f64) -> f64 {
    let normal = standard_normal();
    let t = w / SQRT_2;
    let u = erf(t);
    let v = if u < 0.5 {
        normal.inverse_cdf(u)
    } else {
        -normal.inverse_cdf(erfc(t))
    };
    if v.is_nan() {
        return -NORMAL_SCORE_CLIP;
    }
    v.clamp(-NORMAL_SCORE_CLIP, NORMAL_SCORE_CLIP)
}

/// Pointwise `10^value`; log(m^2) to m^2.
pub fn log_k_to_k(log_field: &ScalarField) -> Result<ScalarField> {
    if log_field.units != LOG_PERMEABILITY_UNITS {
        return Err(Error::InvalidInput(format!(
            "expected units {LOG_PERMEABILITY_UNITS}, got {}",
            log_field.units
        )));
    }
    log_field.map(PERMEABILITY_UNITS, |v| 10f64.powf(v))
}
