//! Trained generator used as the surrogate.

use std::path::Path;

use porogan_core::dataset::{denormalize, Channel, Dataset};
use porogan_core::ScalarField;
use tch::nn::VarStore;
use tch::{Device, Kind, Tensor};

use crate::checkpoint::{Checkpoint, CheckpointHeader};
use crate::error::{Error, Result};
use crate::nets::Generator;

/// Rows of inference per forward pass.
pub const INFER_BATCH: i64 = 16;

/// Evaluation-mode forward pass in chunks of `batch` rows, without gradients.
pub fn predict(generator: &Generator, inputs: &Tensor, batch: i64) -> Result<Tensor> {
    let n = inputs.size().first().copied().unwrap_or(0);
    let mut parts = Vec::new();
    tch::no_grad(|| -> Result<()> {
        let mut start = 0;
        while start < n {
            let len = batch.max(1).min(n - start);
            parts.push(generator.forward(&inputs.narrow(0, start, len), false)?);
            start += len;
        }
        Ok(())
    })?;
    if parts.is_empty() {
        return Err(Error::Shape("no inputs to predict".into()));
    }
    Ok(Tensor::cat(&parts, 0))
}

/// Stacks role channels of every sample into `[M, C, ny, nx]`.
pub fn stack_channels(ds: &Dataset, channels: &[Channel], device: Device) -> Result<Tensor> {
    let mut values = Vec::with_capacity(ds.samples * channels.len() * ds.grid.cells());
    for s in 0..ds.samples {
        values.extend(ds.stack(s, channels)?);
    }
    Ok(Tensor::from_slice(&values)
        .reshape([ds.samples as i64, channels.len() as i64, ds.grid.ny as i64, ds.grid.nx as i64])
        .to_device(device))
}

/// Denormalized prediction of every target channel of sample `s`.
pub fn physical_predictions(
    prediction: &Tensor,
    s: i64,
    header: &CheckpointHeader,
) -> Result<Vec<ScalarField>> {
    let grid = header.grid;
    header
        .roles
        .targets
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let spec = header
                .channels
                .iter()
                .find(|spec| spec.name == *c)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks bounds for {c}")))?;
            let raster: Vec<f32> =
                Vec::<f32>::try_from(prediction.get(s).get(k as i64).to_kind(Kind::Float).reshape([-1]))?;
            let raster: Vec<f64> = raster.into_iter().map(f64::from).collect();
            Ok(denormalize(&raster, spec, grid)?)
        })
        .collect()
}

/// Generator restored from a checkpoint, in evaluation mode.
#[derive(Debug)]
pub struct Rom {
    _vs: VarStore,
    pub generator: Generator,
    pub header: CheckpointHeader,
    pub device: Device,
}

impl Rom {
    pub fn from_checkpoint(ckpt: &Checkpoint, device: Device) -> Result<Self> {
        let vs = VarStore::new(device);
        let generator = Generator::new(&vs.root(), &ckpt.header.generator)?;
        crate::train::load_variables(&vs, ckpt, "generator")?;
        Ok(Self {
            _vs: vs,
            generator,
            header: ckpt.header.clone(),
            device,
        })
    }

    pub fn load(path: impl AsRef<Path>, device: Device) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::read(path)?, device)
    }

    /// `[B, C_in, H, W]` normalized inputs to `[B, C_out, H, W]` outputs in (0, 1).
    pub fn infer(&self, inputs: &Tensor) -> Result<Tensor> {
        let size = inputs.size();
        if size.len() != 4 || size[1] != self.header.generator.in_channels {
            return Err(Error::Shape(format!(
                "expected [B, {}, H, W] inputs, got {size:?}",
                self.header.generator.in_channels
            )));
        }
        predict(&self.generator, &inputs.to_device(self.device).to_kind(Kind::Float), INFER_BATCH)
    }

    /// One sample as channel-major rows on the training grid.
    pub fn infer_raster(&self, input: &[f32]) -> Result<Vec<f32>> {
        let g = self.header.grid;
        let c = self.header.generator.in_channels;
        if input.len() != c as usize * g.cells() {
            return Err(Error::Shape(format!(
                "expected {} values ({c} channels of {}x{}), got {}",
                c as usize * g.cells(),
                g.nx,
                g.ny,
                input.len()
            )));
        }
        let x = Tensor::from_slice(input).reshape([1, c, g.ny as i64, g.nx as i64]);
        let y = self.infer(&x)?;
        Ok(Vec::<f32>::try_from(y.to_device(Device::Cpu).reshape([-1]))?)
    }

    /// Denormalized predictions for every sample of a dataset with matching roles.
    pub fn predict_dataset(&self, ds: &Dataset) -> Result<Vec<Vec<ScalarField>>> {
        if ds.roles != self.header.roles || ds.grid != self.header.grid {
            return Err(Error::Config("dataset roles or grid differ from the checkpoint".into()));
        }
        let inputs = stack_channels(ds, &ds.roles.inputs, self.device)?;
        let out = self.infer(&inputs)?;
        (0..ds.samples as i64)
            .map(|s| physical_predictions(&out, s, &self.header))
            .collect()
    }
}
