//! Held-out accuracy, correlation and cost/accuracy report of a checkpoint.

use std::fs;
use std::path::Path;

use porogan_cgan::infer::{stack_channels, INFER_BATCH};
use porogan_cgan::{Direction, Rom};
use porogan_core::dataset::{read_dataset, Channel, Dataset};
use porogan_core::fom::{solve_steady_hm, BoundaryConditions, MaterialParams};
use porogan_core::metrics::{
    mfmc_criterion, pearson, rmse, EvalPair, MfmcCheck, TimingReport, MIN_TIMING_REPEATS,
};
use serde::{Deserialize, Serialize};
use tch::Tensor;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::plot::{line_chart, Chart, Series};
use crate::training::eval_history;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub step: usize,
    pub direction: Direction,
    pub channels: Vec<Channel>,
    pub units: Vec<String>,
    pub samples: usize,
    /// Pooled over every cell of every test sample.
    pub rmse: Vec<f64>,
    pub rmse_mean: Vec<f64>,
    pub rmse_min: Vec<f64>,
    pub rmse_max: Vec<f64>,
    /// `rmse_per_sample[s][c]`
    pub rmse_per_sample: Vec<Vec<f64>>,
    /// Largest absolute test value per channel.
    pub max_abs: Vec<f64>,
    pub pearson: Vec<f64>,
    pub timing: TimingReport,
    pub mfmc: Vec<MfmcCheck>,
}

/// Truth and denormalized prediction of every test sample.
pub fn eval_pairs(rom: &Rom, test: &Dataset) -> Result<Vec<EvalPair>> {
    let predictions = rom.predict_dataset(test)?;
    predictions
        .into_iter()
        .enumerate()
        .map(|(s, prediction)| {
            let truth = test
                .roles
                .targets
                .iter()
                .map(|&c| test.physical(s, c))
                .collect::<porogan_core::Result<Vec<_>>>()?;
            Ok(EvalPair::new(truth, prediction)?)
        })
        .collect()
}

/// Median full-order solve time against the amortized per-sample inference
/// time of batches of [`INFER_BATCH`] test inputs.
pub fn measure_timing(
    rom: &Rom,
    test: &Dataset,
    material: &MaterialParams,
    boundary: &BoundaryConditions,
    repeats: usize,
) -> Result<TimingReport> {
    let log_k = test.physical(0, Channel::LogK)?;
    let inputs = stack_channels(test, &test.roles.inputs, rom.device)?;
    let n = inputs.size()[0];
    let rows: Vec<i64> = (0..INFER_BATCH).map(|k| k % n).collect();
    let batch = inputs.index_select(0, &Tensor::from_slice(&rows).to_device(rom.device));
    let report = TimingReport::measure(
        repeats.max(MIN_TIMING_REPEATS),
        || solve_steady_hm(&log_k, material, boundary),
        || {
            let y = rom.infer(&batch).map_err(|e| porogan_core::Error::InvalidInput(e.to_string()))?;
            // forces completion on asynchronous devices
            Ok(y.sum(tch::Kind::Float).double_value(&[]))
        },
    )?;
    Ok(TimingReport::new(report.w_fom, report.w_rom / INFER_BATCH as f64, report.repeats)?)
}

pub fn evaluate(
    rom: &Rom,
    test: &Dataset,
    material: &MaterialParams,
    boundary: &BoundaryConditions,
    repeats: usize,
) -> Result<EvalReport> {
    if test.samples == 0 {
        return Err(Error::Usage("the test split is empty".into()));
    }
    let pairs = eval_pairs(rom, test)?;
    let r = rmse(&pairs)?;
    let rho = pearson(&pairs)?;
    let timing = measure_timing(rom, test, material, boundary, repeats)?;
    let mfmc = rho
        .iter()
        .map(|&p| mfmc_criterion(p, &timing))
        .collect::<porogan_core::Result<Vec<_>>>()?;
    let channels = test.roles.targets.clone();
    let max_abs = (0..channels.len())
        .map(|c| {
            pairs
                .iter()
                .flat_map(|p| p.truth[c].values.iter())
                .fold(0.0_f64, |m, v| m.max(v.abs()))
        })
        .collect();
    Ok(EvalReport {
        step: rom.header.step,
        direction: rom.header.direction,
        units: channels.iter().map(|c| c.units().to_string()).collect(),
        channels,
        samples: test.samples,
        rmse_mean: r.mean_per_channel(),
        rmse_min: r.min_per_channel(),
        rmse_max: r.max_per_channel(),
        rmse: r.pooled,
        rmse_per_sample: r.per_sample,
        max_abs,
        pearson: rho,
        timing,
        mfmc,
    })
}

/// Criterion curve `(1 - rho^2) / rho^2` with the measured operating points.
fn mfmc_chart(path: &Path, report: &EvalReport) -> Result<()> {
    let curve: Vec<(f64, f64)> = (1..=199)
        .map(|k| {
            let rho = k as f64 / 200.0;
            (rho, (1.0 - rho * rho) / (rho * rho))
        })
        .collect();
    let measured = report
        .pearson
        .iter()
        .map(|&p| (p.abs(), report.timing.speedup()))
        .collect();
    line_chart(
        path,
        &Chart {
            title: "Cost ratio against the correlation threshold",
            x_label: "Pearson correlation",
            y_label: "w_fom / w_rom",
            log_y: true,
        },
        &[
            Series::line("threshold (1 - rho^2) / rho^2", curve),
            Series::markers("measured", measured),
        ],
    )
}

fn rmse_chart(path: &Path, history: &[(usize, Vec<f64>)], channels: &[Channel]) -> Result<()> {
    let series: Vec<Series> = channels
        .iter()
        .enumerate()
        .map(|(c, ch)| {
            Series::line(
                format!("{} [{}]", ch.name(), ch.units()),
                history.iter().map(|(s, r)| (*s as f64, r[c])).collect(),
            )
        })
        .collect();
    line_chart(
        path,
        &Chart {
            title: "Held-out RMSE over training steps",
            x_label: "step",
            y_label: "RMSE",
            log_y: true,
        },
        &series,
    )
}

/// Evaluates `checkpoint` on `dataset` (the run's test split by default) and
/// writes `eval/report.json` with its plots.
pub fn run_evaluate(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    dataset: Option<&Path>,
    device: tch::Device,
) -> Result<EvalReport> {
    let rom = Rom::load(checkpoint, device)?;
    let test = read_dataset(dataset.map_or_else(|| cfg.test_dir(), Path::to_path_buf))?;
    let report = evaluate(&rom, &test, &cfg.material, &cfg.boundary, MIN_TIMING_REPEATS)?;
    let dir = cfg.out.join("eval");
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("report.json"), serde_json::to_vec_pretty(&report)?)?;
    mfmc_chart(&dir.join("mfmc.svg"), &report)?;
    if cfg.report_path().exists() {
        let history = eval_history(&cfg.report_path())?;
        if !history.is_empty() {
            rmse_chart(&dir.join("rmse_vs_step.svg"), &history, &report.channels)?;
        }
    }
    Ok(report)
}
