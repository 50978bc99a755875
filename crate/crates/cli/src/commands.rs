//! Inference, POD and mask commands.

use std::fs;
use std::path::Path;

use porogan_cgan::Rom;
use porogan_core::dataset::{make_mask, read_dataset, Channel, Mask, MaskMode};
use porogan_core::metrics::pod_spectrum;
use porogan_core::{GridSpec, ScalarField};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plot::{line_chart, Chart, Series};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedField {
    pub sample: usize,
    pub channel: Channel,
    pub field: ScalarField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub checkpoint_step: usize,
    pub fields: Vec<PredictedField>,
}

/// Runs the surrogate on every sample of the dataset at `input` and writes the
/// denormalized fields as JSON to `out`.
pub fn run_infer(checkpoint: &Path, input: &Path, out: &Path, device: tch::Device) -> Result<Prediction> {
    let rom = Rom::load(checkpoint, device)?;
    let ds = read_dataset(input)?;
    let predicted = rom.predict_dataset(&ds)?;
    let targets = rom.header.roles.targets.clone();
    let fields = predicted
        .into_iter()
        .enumerate()
        .flat_map(|(sample, fs)| {
            targets
                .iter()
                .zip(fs)
                .map(move |(&channel, field)| PredictedField {
                    sample,
                    channel,
                    field,
                })
        })
        .collect();
    let prediction = Prediction {
        checkpoint_step: rom.header.step,
        fields,
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(out, serde_json::to_vec(&prediction)?)?;
    Ok(prediction)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PodReport {
    pub channel: Channel,
    pub samples: usize,
    pub spectrum: Vec<f64>,
}

/// Normalized POD spectrum of one physical channel of every sample.
pub fn channel_spectrum(ds: &porogan_core::dataset::Dataset, channel: Channel) -> Result<Vec<f64>> {
    if ds.mask.as_ref().is_some_and(|m| m.channels.contains(&channel)) {
        return Err(Error::Usage(format!("channel {channel} is masked in this dataset")));
    }
    let rows = (0..ds.samples)
        .map(|s| ds.physical(s, channel).map(|f| f.values))
        .collect::<porogan_core::Result<Vec<_>>>()?;
    Ok(pod_spectrum(&rows)?)
}

/// Writes `pod_<channel>.json` and `pod_<channel>.svg` into `out_dir`.
pub fn run_pod(dataset: &Path, channel: Channel, out_dir: &Path) -> Result<PodReport> {
    let ds = read_dataset(dataset)?;
    let spectrum = channel_spectrum(&ds, channel)?;
    let report = PodReport {
        channel,
        samples: ds.samples,
        spectrum,
    };
    fs::create_dir_all(out_dir)?;
    let stem = format!("pod_{}", channel.name());
    fs::write(out_dir.join(format!("{stem}.json")), serde_json::to_vec_pretty(&report)?)?;
    let points = report
        .spectrum
        .iter()
        .enumerate()
        .map(|(i, &v)| ((i + 1) as f64, v))
        .collect();
    line_chart(
        &out_dir.join(format!("{stem}.svg")),
        &Chart {
            title: "Normalized POD spectrum",
            x_label: "index",
            y_label: "eigenvalue / largest",
            log_y: true,
        },
        &[Series::line(channel.name(), points)],
    )?;
    Ok(report)
}

/// Writes one byte per cell (row-major, 1 = observed) to `out`.
pub fn run_mask(resolution: usize, fraction: f64, mode: MaskMode, seed: u64, out: &Path) -> Result<Mask> {
    let grid = GridSpec::unit_square(resolution).map_err(|e| Error::Usage(e.to_string()))?;
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Usage(format!("fraction {fraction} outside (0, 1]")));
    }
    let mask = make_mask(grid, fraction, mode, seed)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(out, mask.to_bytes())?;
    Ok(mask)
}
