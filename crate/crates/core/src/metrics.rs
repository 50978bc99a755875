//! Accuracy, correlation, cost/accuracy and compressibility measures.

use std::time::Instant;

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarField;

/// Ground truth and prediction for one sample, one field per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub truth: Vec<ScalarField>,
    pub prediction: Vec<ScalarField>,
}

impl EvalPair {
    pub fn new(truth: Vec<ScalarField>, prediction: Vec<ScalarField>) -> Result<Self> {
        let pair = Self { truth, prediction };
        pair.validate()?;
        Ok(pair)
    }

    pub fn single(truth: ScalarField, prediction: ScalarField) -> Result<Self> {
        Self::new(vec![truth], vec![prediction])
    }

    pub fn channels(&self) -> usize {
        self.truth.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.truth.len() != self.prediction.len() || self.truth.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "{} truth channels against {} predicted",
                self.truth.len(),
                self.prediction.len()
            )));
        }
        for (t, p) in self.truth.iter().zip(&self.prediction) {
            check_match(t, p)?;
        }
        Ok(())
    }
}

fn check_match(t: &ScalarField, p: &ScalarField) -> Result<()> {
    if !t.same_shape(p) {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} truth against {}x{} prediction",
            t.grid.nx, t.grid.ny, p.grid.nx, p.grid.ny
        )));
    }
    if t.units != p.units {
        return Err(Error::ShapeMismatch(format!(
            "units differ: {} vs {}",
            t.units, p.units
        )));
    }
    Ok(())
}

/// Pointwise `|truth - prediction|`.
pub fn diff_field(truth: &ScalarField, prediction: &ScalarField) -> Result<ScalarField> {
    check_match(truth, prediction)?;
    let values = truth
        .values
        .iter()
        .zip(&prediction.values)
        .map(|(a, b)| (a - b).abs())
        .collect();
    ScalarField::new(truth.grid, values, truth.units.clone())
}

/// RMSE per channel, pooled over all cells of all samples and per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    pub pooled: Vec<f64>,
    /// `per_sample[s][c]`
    pub per_sample: Vec<Vec<f64>>,
}

impl RmseReport {
    pub fn min_per_channel(&self) -> Vec<f64> {
        self.fold(f64::INFINITY, f64::min)
    }

    pub fn max_per_channel(&self) -> Vec<f64> {
        self.fold(f64::NEG_INFINITY, f64::max)
    }

    /// Mean of the per-sample values.
    pub fn mean_per_channel(&self) -> Vec<f64> {
        let n = self.per_sample.len() as f64;
        self.fold(0.0, |a, b| a + b).iter().map(|s| s / n).collect()
    }

    fn fold(&self, init: f64, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..self.pooled.len())
            .map(|c| self.per_sample.iter().map(|s| s[c]).fold(init, &f))
            .collect()
    }
}

fn check_pairs(pairs: &[EvalPair]) -> Result<usize> {
    let first = pairs
        .first()
        .ok_or_else(|| Error::InvalidInput("no evaluation pairs".into()))?;
    let channels = first.channels();
    for p in pairs {
        p.validate()?;
        if p.channels() != channels {
            return Err(Error::ShapeMismatch("pairs carry different channel counts".into()));
        }
    }
    Ok(channels)
}

pub fn rmse(pairs: &[EvalPair]) -> Result<RmseReport> {
    let channels = check_pairs(pairs)?;
    let mut sum = vec![0.0; channels];
    let mut count = vec![0usize; channels];
    let mut per_sample = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let mut row = Vec::with_capacity(channels);
        for c in 0..channels {
            let (t, p) = (&pair.truth[c], &pair.prediction[c]);
            let sq: f64 = t
                .values
                .iter()
                .zip(&p.values)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            sum[c] += sq;
            count[c] += t.values.len();
            row.push((sq / t.values.len() as f64).sqrt());
        }
        per_sample.push(row);
    }
    let pooled = sum
        .iter()
        .zip(&count)
        .map(|(s, &n)| (s / n as f64).sqrt())
        .collect();
    Ok(RmseReport { pooled, per_sample })
}

/// Pearson correlation of two equally long value lists.
pub fn pearson_values(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "{} values against {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "one side has zero variance".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation per channel over the pooled values of all samples.
pub fn pearson(pairs: &[EvalPair]) -> Result<Vec<f64>> {
    let channels = check_pairs(pairs)?;
    (0..channels)
        .map(|c| {
            let x: Vec<f64> = pairs.iter().flat_map(|p| p.truth[c].values.iter().copied()).collect();
            let y: Vec<f64> = pairs
                .iter()
                .flat_map(|p| p.prediction[c].values.iter().copied())
                .collect();
            pearson_values(&x, &y)
        })
        .collect()
}

/// Median wall times of the full-order solve and of one surrogate evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub w_fom: f64,
    pub w_rom: f64,
    pub repeats: usize,
}

pub const MIN_TIMING_REPEATS: usize = 5;

/// One warmup call, then the median wall time of `repeats` calls.
pub fn median_wall_time<T>(repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<f64> {
    if repeats < MIN_TIMING_REPEATS {
        return Err(Error::InvalidInput(format!(
            "timing needs at least {MIN_TIMING_REPEATS} repeats, got {repeats}"
        )));
    }
    std::hint::black_box(f()?);
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        std::hint::black_box(f()?);
        times.push(start.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    let mid = repeats / 2;
    Ok(if repeats % 2 == 1 {
        times[mid]
    } else {
        0.5 * (times[mid - 1] + times[mid])
    })
}

impl TimingReport {
    pub fn new(w_fom: f64, w_rom: f64, repeats: usize) -> Result<Self> {
        let t = Self {
            w_fom,
            w_rom,
            repeats,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn measure<A, B>(
        repeats: usize,
        fom: impl FnMut() -> Result<A>,
        rom: impl FnMut() -> Result<B>,
    ) -> Result<Self> {
        let w_fom = median_wall_time(repeats, fom)?;
        let w_rom = median_wall_time(repeats, rom)?;
        // a timer tick of zero would make the ratio meaningless
        Self::new(w_fom.max(1e-9), w_rom.max(1e-9), repeats)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w_fom > 0.0 && self.w_rom > 0.0) || self.repeats < MIN_TIMING_REPEATS {
            return Err(Error::InvalidInput(format!("invalid timing report {self:?}")));
        }
        Ok(())
    }

    pub fn speedup(&self) -> f64 {
        self.w_fom / self.w_rom
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfmcCheck {
    pub holds: bool,
    /// Cost ratio `w_fom / w_rom`.
    pub lhs: f64,
    /// `(1 - rho^2) / rho^2`
    pub rhs: f64,
}

/// Whether the surrogate's speed-up outweighs its loss of correlation.
pub fn mfmc_criterion(rho: f64, timing: &TimingReport) -> Result<MfmcCheck> {
    timing.validate()?;
    if !(rho.abs() <= 1.0) {
        return Err(Error::InvalidInput(format!("correlation {rho} outside [-1, 1]")));
    }
    let lhs = timing.speedup();
    let rho2 = rho * rho;
    let rhs = if rho2 == 0.0 {
        f64::INFINITY
    } else {
        (1.0 - rho2) / rho2
    };
    Ok(MfmcCheck {
        holds: lhs > rhs,
        lhs,
        rhs,
    })
}

/// Normalized POD spectrum of `snapshots` (each flattened to one row): Gram
/// matrix eigenvalues, without mean-centering, sorted descending and divided
/// by the largest.
pub fn pod_spectrum(snapshots: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m = snapshots.len();
    if m < 2 {
        return Err(Error::InvalidInput(format!("POD needs at least 2 snapshots, got {m}")));
    }
    let d = snapshots[0].len();
    if d == 0 || snapshots.iter().any(|s| s.len() != d) {
        return Err(Error::ShapeMismatch("snapshots have different lengths".into()));
    }
    let mut gram = Mat::<f64>::zeros(m, m);
    for a in 0..m {
        for b in 0..=a {
            let g: f64 = snapshots[a].iter().zip(&snapshots[b]).map(|(x, y)| x * y).sum();
            gram[(a, b)] = g;
            gram[(b, a)] = g;
        }
    }
    let mut eig = gram
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::InvalidInput(format!("eigenvalue solve failed: {e:?}")))?;
    eig.sort_by(|a, b| b.total_cmp(a));
    let top = eig[0];
    if top <= 0.0 {
        return Err(Error::InvalidInput("all snapshots are zero".into()));
    }
    Ok(eig.iter().map(|&l| (l / top).max(0.0)).collect())
}
