//! Training driver: datasets from the run directory, checkpoints and a JSON-lines report.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use porogan_cgan::{Checkpoint, LossReport, Trainer};
use porogan_core::dataset::{read_dataset, Dataset};
use tch::Device;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};

#[derive(Debug)]
pub struct TrainSummary {
    pub steps: usize,
    pub final_checkpoint: PathBuf,
    pub last: Option<LossReport>,
}

/// Held-out split when it exists and is not empty.
pub fn held_out(cfg: &ExperimentConfig) -> Result<Option<Dataset>> {
    if !cfg.test_dir().exists() {
        return Ok(None);
    }
    let ds = read_dataset(cfg.test_dir())?;
    Ok((ds.samples > 0).then_some(ds))
}

/// Report lines of steps before `step`, kept when a run is resumed.
fn earlier_lines(path: &Path, step: usize) -> Result<Vec<String>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut kept = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        let v: serde_json::Value = serde_json::from_str(&line)?;
        if v["step"].as_u64().is_some_and(|s| (s as usize) < step) {
            kept.push(line);
        }
    }
    Ok(kept)
}

/// Trains from scratch, or from `resume`, writing `checkpoints/` and `train_report.jsonl`.
pub fn run_training(cfg: &ExperimentConfig, resume: Option<&Path>, device: Device) -> Result<TrainSummary> {
    let data = read_dataset(cfg.train_dir())?;
    if data.samples == 0 {
        return Err(Error::Usage(format!("no training samples in {}", cfg.train_dir().display())));
    }
    let test = held_out(cfg)?;
    let mut trainer = match resume {
        Some(path) => {
            let ckpt = Checkpoint::read(path)?;
            info!("resuming from {} at step {}", path.display(), ckpt.header.step);
            Trainer::resume(&ckpt, &data, device)?
        }
        None => Trainer::new(cfg.train.clone(), cfg.dataset.direction, &data, device)?,
    };
    fs::create_dir_all(cfg.checkpoint_dir())?;
    let report_path = cfg.report_path();
    let kept = earlier_lines(&report_path, trainer.step())?;
    let mut out = BufWriter::new(File::create(&report_path)?);
    for line in kept {
        writeln!(out, "{line}")?;
    }
    let mut write_error = None;
    let reports = trainer.run(test.as_ref(), Some(&cfg.checkpoint_dir()), |r| {
        if r.step % 100 == 0 {
            info!("step {}: disc {:.4e} gen {:.4e} l_r {:.4e}", r.step, r.disc_loss, r.gen_loss, r.l_r);
        }
        let line = serde_json::to_string(r).map_err(Error::from);
        let res = line.and_then(|l| writeln!(out, "{l}").and_then(|_| out.flush()).map_err(Error::from));
        if let (Err(e), None) = (res, &write_error) {
            write_error = Some(e);
        }
    })?;
    if let Some(e) = write_error {
        return Err(e);
    }
    let final_checkpoint = cfg.final_checkpoint();
    trainer.save(&final_checkpoint)?;
    Ok(TrainSummary {
        steps: trainer.step(),
        final_checkpoint,
        last: reports.last().cloned(),
    })
}

/// `(step, eval_rmse)` entries of a training report file.
pub fn eval_history(path: &Path) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let r: LossReport = serde_json::from_str(&line?)?;
        if let Some(e) = r.eval_rmse {
            out.push((r.step + 1, e));
        }
    }
    Ok(out)
}
