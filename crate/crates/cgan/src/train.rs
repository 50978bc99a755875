//! Alternating discriminator and generator updates.

use std::path::{Path, PathBuf};

use log::{info, warn};
use porogan_core::dataset::{Channel, ChannelSpec, Dataset, Roles};
use porogan_core::metrics::{rmse, EvalPair};
use porogan_core::rng::{mix64, sample_rng};
use porogan_core::GridSpec;
use rand::Rng;
use serde::{Deserialize, Serialize};
use tch::nn::VarStore;
use tch::{Device, Tensor};

use crate::checkpoint::{dataset_digest, tensor_values, Checkpoint, CheckpointHeader, TensorEntry};
use crate::config::{Direction, TrainConfig, Variant};
use crate::error::{Error, Result};
use crate::infer::{physical_predictions, predict, stack_channels, INFER_BATCH};
use crate::losses::{bce_discriminator, bce_generator, earth_mover, gradient_penalty, l1};
use crate::nets::{Discriminator, Generator};
use crate::optim::Adam;
use crate::schedule::lr_schedule;

/// Per-step record of the training losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub step: usize,
    pub eta_c: f64,
    pub l_a: f64,
    pub l_r: f64,
    /// Gradient penalty, W variant only.
    pub gp: Option<f64>,
    /// Mean critic gradient norm on the mixed samples, W variant only.
    pub grad_norm: Option<f64>,
    pub disc_loss: f64,
    pub gen_loss: f64,
    /// Pooled held-out RMSE per target channel in physical units.
    pub eval_rmse: Option<Vec<f64>>,
}

/// Checks that the dataset roles are the ones `direction` trains on.
pub fn check_direction(roles: &Roles, direction: Direction) -> Result<()> {
    roles.validate()?;
    let ok = match direction {
        Direction::Forward => {
            roles.inputs == [Channel::LogK] && !roles.targets.contains(&Channel::LogK)
        }
        Direction::Inverse => {
            roles.targets == [Channel::LogK] && !roles.inputs.contains(&Channel::LogK)
        }
    };
    if !ok {
        return Err(Error::Config(format!(
            "dataset roles {:?} -> {:?} do not match the {direction:?} direction",
            roles.inputs, roles.targets
        )));
    }
    Ok(())
}

fn sorted_variables(vs: &VarStore) -> Vec<(String, Tensor)> {
    let mut vars: Vec<(String, Tensor)> = vs.variables().into_iter().collect();
    vars.sort_by(|a, b| a.0.cmp(&b.0));
    vars
}

/// Copies `prefix/<name>` tensors of a checkpoint into the variables of `vs`.
pub(crate) fn load_variables(vs: &VarStore, ckpt: &Checkpoint, prefix: &str) -> Result<()> {
    for (name, mut var) in sorted_variables(vs) {
        let key = format!("{prefix}/{name}");
        let t = ckpt.tensor(&key).ok_or_else(|| Error::Checkpoint {
            path: PathBuf::new(),
            reason: format!("missing tensor {key}"),
        })?;
        if t.size() != var.size() {
            return Err(Error::Checkpoint {
                path: PathBuf::new(),
                reason: format!("tensor {key} has shape {:?}, expected {:?}", t.size(), var.size()),
            });
        }
        tch::no_grad(|| var.copy_(&t.to_device(var.device())));
    }
    Ok(())
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(f64::try_from(t.detach())?)
}

/// Generator, discriminator and optimizer state bound to one training set.
#[derive(Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub direction: Direction,
    g_vs: VarStore,
    d_vs: VarStore,
    pub generator: Generator,
    pub discriminator: Discriminator,
    g_opt: Adam,
    d_opt: Adam,
    step: usize,
    grid: GridSpec,
    roles: Roles,
    channels: Vec<ChannelSpec>,
    digest: String,
    inputs: Tensor,
    targets: Tensor,
    last_checkpoint: Option<PathBuf>,
}

impl Trainer {
    pub fn new(config: TrainConfig, direction: Direction, data: &Dataset, device: Device) -> Result<Self> {
        config.validate()?;
        data.validate()?;
        check_direction(&data.roles, direction)?;
        if data.samples == 0 {
            return Err(Error::Config("training set is empty".into()));
        }
        let cin = data.roles.inputs.len() as i64;
        let cout = data.roles.targets.len() as i64;
        let gspec = config.generator_spec(cin, cout);
        gspec.check_spatial(data.grid.ny as i64, data.grid.nx as i64)?;
        let dspec = config.discriminator_spec(cin, cout);
        tch::manual_seed(mix64(config.seed) as i64);
        let g_vs = VarStore::new(device);
        let generator = Generator::new(&g_vs.root(), &gspec)?;
        let d_vs = VarStore::new(device);
        let discriminator = Discriminator::new(&d_vs.root(), &dspec)?;
        let g_opt = Adam::new(&g_vs, config.adam);
        let d_opt = Adam::new(&d_vs, config.adam);
        Ok(Self {
            inputs: stack_channels(data, &data.roles.inputs, device)?,
            targets: stack_channels(data, &data.roles.targets, device)?,
            digest: dataset_digest(data)?,
            grid: data.grid,
            roles: data.roles.clone(),
            channels: data.channels.clone(),
            config,
            direction,
            g_vs,
            d_vs,
            generator,
            discriminator,
            g_opt,
            d_opt,
            step: 0,
            last_checkpoint: None,
        })
    }

    /// Continues from a checkpoint written by [`Trainer::checkpoint`] on the same data.
    pub fn resume(ckpt: &Checkpoint, data: &Dataset, device: Device) -> Result<Self> {
        let h = &ckpt.header;
        let digest = dataset_digest(data)?;
        if digest != h.dataset_digest {
            return Err(Error::Config(format!(
                "checkpoint was trained on dataset {}, not {digest}",
                h.dataset_digest
            )));
        }
        let mut t = Self::new(h.config.clone(), h.direction, data, device)?;
        load_variables(&t.g_vs, ckpt, "generator")?;
        load_variables(&t.d_vs, ckpt, "discriminator")?;
        fn lookup<'a>(ckpt: &'a Checkpoint, prefix: &'a str) -> impl FnMut(&str) -> Option<Tensor> + 'a {
            move |name| ckpt.tensor(&format!("{prefix}/{name}"))
        }
        let restore_err = |reason: String| Error::Checkpoint {
            path: PathBuf::new(),
            reason,
        };
        t.g_opt
            .restore(h.generator_optimizer_steps, lookup(ckpt, "generator_adam"))
            .map_err(restore_err)?;
        t.d_opt
            .restore(h.discriminator_optimizer_steps, lookup(ckpt, "discriminator_adam"))
            .map_err(restore_err)?;
        t.step = h.step;
        Ok(t)
    }

    /// Completed steps.
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn generator_store(&self) -> &VarStore {
        &self.g_vs
    }

    pub fn discriminator_store(&self) -> &VarStore {
        &self.d_vs
    }

    pub fn last_checkpoint(&self) -> Option<&Path> {
        self.last_checkpoint.as_deref()
    }

    fn non_finite(&self, what: &str) -> Error {
        Error::NonFinite {
            what: what.into(),
            step: self.step,
            last_checkpoint: self.last_checkpoint.clone(),
        }
    }

    fn finite(&self, t: &Tensor, what: &str) -> Result<f64> {
        let v = scalar(t)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.non_finite(what))
        }
    }

    /// Batch rows and mixing weights of step `step`; a pure function of the seed.
    pub fn batch_plan(&self, step: usize) -> (Vec<i64>, Vec<f64>) {
        let m = self.inputs.size()[0] as usize;
        let b = self.config.batch_size.min(m);
        let mut rng = sample_rng(mix64(self.config.seed), step as u64);
        let rows = rand::seq::index::sample(&mut rng, m, b)
            .into_iter()
            .map(|i| i as i64)
            .collect();
        let eps = (0..b).map(|_| rng.random::<f64>()).collect();
        (rows, eps)
    }

    /// One discriminator update followed by one generator update.
    pub fn train_step(&mut self) -> Result<LossReport> {
        let cfg = self.config.clone();
        let s = self.step;
        let eta = lr_schedule(s, cfg.steps, cfg.schedule.eta_min, cfg.schedule.eta_max);
        let (rows, eps) = self.batch_plan(s);
        tch::manual_seed(mix64(cfg.seed ^ mix64(s as u64 + 1)) as i64);
        let index = Tensor::from_slice(&rows).to_device(self.inputs.device());
        let cond = self.inputs.index_select(0, &index);
        let real = self.targets.index_select(0, &index);
        let fake = self.generator.forward(&cond, true)?;

        self.d_opt.zero_grad();
        let real_scores = self.discriminator.forward(&cond, &real, true)?;
        let fake_scores = self.discriminator.forward(&cond, &fake.detach(), true)?;
        let (disc_loss, l_a, gp) = match cfg.variant {
            Variant::W => {
                let l_a = earth_mover(&real_scores, &fake_scores);
                let disc = &self.discriminator;
                let gp = gradient_penalty(|c, x| disc.forward(c, x, true), &cond, &real, &fake, &eps, cfg.gp_mode)
                    .map_err(|e| match e {
                        Error::NonFinite { what, .. } => self.non_finite(&what),
                        e => e,
                    })?;
                (-&l_a + &gp.penalty * cfg.lambda_p, l_a, Some(gp))
            }
            Variant::Base | Variant::Sn => {
                let d = bce_discriminator(&real_scores, &fake_scores);
                (d.shallow_clone(), d, None)
            }
        };
        let disc_value = self.finite(&disc_loss, "discriminator loss")?;
        disc_loss.backward();
        self.d_opt.step(eta);

        self.g_opt.zero_grad();
        let scores = self.discriminator.forward(&cond, &fake, true)?;
        let l_r = l1(&fake, &real);
        let adversarial = match cfg.variant {
            Variant::W => -scores.mean(scores.kind()),
            Variant::Base | Variant::Sn => bce_generator(&scores, cfg.adversarial_form),
        };
        let gen_loss = adversarial + &l_r * cfg.lambda_r;
        let gen_value = self.finite(&gen_loss, "generator loss")?;
        gen_loss.backward();
        self.g_opt.step(eta);

        let report = LossReport {
            step: s,
            eta_c: eta,
            l_a: self.finite(&l_a, "adversarial term")?,
            l_r: self.finite(&l_r, "reconstruction term")?,
            gp: gp.as_ref().map(|g| self.finite(&g.penalty, "gradient penalty")).transpose()?,
            grad_norm: gp.as_ref().map(|g| g.mean_norm),
            disc_loss: disc_value,
            gen_loss: gen_value,
            eval_rmse: None,
        };
        self.step += 1;
        Ok(report)
    }

    /// Pooled held-out RMSE per target channel, in physical units.
    pub fn evaluate(&self, held_out: &Dataset) -> Result<Vec<f64>> {
        if held_out.roles != self.roles || held_out.grid != self.grid {
            return Err(Error::Config("held-out roles or grid differ from the training set".into()));
        }
        let inputs = stack_channels(held_out, &held_out.roles.inputs, self.inputs.device())?;
        let out = predict(&self.generator, &inputs, INFER_BATCH)?;
        let header = self.header(Vec::new());
        let mut pairs = Vec::with_capacity(held_out.samples);
        for s in 0..held_out.samples {
            let truth = held_out
                .roles
                .targets
                .iter()
                .map(|&c| held_out.physical(s, c))
                .collect::<porogan_core::Result<Vec<_>>>()?;
            let prediction = physical_predictions(&out, s as i64, &header)?;
            pairs.push(EvalPair::new(truth, prediction)?);
        }
        Ok(rmse(&pairs)?.pooled)
    }

    fn header(&self, tensors: Vec<TensorEntry>) -> CheckpointHeader {
        CheckpointHeader {
            config: self.config.clone(),
            direction: self.direction,
            generator: self.generator.spec.clone(),
            discriminator: self.discriminator.spec.clone(),
            grid: self.grid,
            roles: self.roles.clone(),
            channels: self.channels.clone(),
            dataset_digest: self.digest.clone(),
            step: self.step,
            generator_optimizer_steps: self.g_opt.steps_taken(),
            discriminator_optimizer_steps: self.d_opt.steps_taken(),
            tensors,
        }
    }

    /// Snapshot of every variable and optimizer moment.
    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let mut named = Vec::new();
        for (prefix, vs) in [("generator", &self.g_vs), ("discriminator", &self.d_vs)] {
            for (name, t) in sorted_variables(vs) {
                named.push((format!("{prefix}/{name}"), t));
            }
        }
        for (prefix, opt) in [("generator_adam", &self.g_opt), ("discriminator_adam", &self.d_opt)] {
            for (name, t) in opt.state() {
                named.push((format!("{prefix}/{name}"), t));
            }
        }
        let mut entries = Vec::with_capacity(named.len());
        let mut values = Vec::with_capacity(named.len());
        for (name, t) in named {
            entries.push(TensorEntry {
                name,
                shape: t.size(),
            });
            values.push(tensor_values(&t)?);
        }
        Ok(Checkpoint {
            header: self.header(entries),
            values,
        })
    }

    pub fn save(&mut self, path: impl AsRef<Path>) -> Result<()> {
        self.checkpoint()?.write(path.as_ref())?;
        self.last_checkpoint = Some(path.as_ref().to_path_buf());
        Ok(())
    }

    /// Runs the remaining steps. Checkpoints go to `checkpoint_dir` as
    /// `step_<n>.pgck` every `checkpoint_every` steps.
    pub fn run(
        &mut self,
        held_out: Option<&Dataset>,
        checkpoint_dir: Option<&Path>,
        mut on_report: impl FnMut(&LossReport),
    ) -> Result<Vec<LossReport>> {
        let mut reports = Vec::with_capacity(self.config.steps.saturating_sub(self.step));
        while self.step < self.config.steps {
            let mut report = self.train_step()?;
            let done = self.step;
            if let Some(eval) = held_out {
                if self.config.eval_every > 0 && done % self.config.eval_every == 0 {
                    let r = self.evaluate(eval)?;
                    info!("step {done}: held-out RMSE {r:?}");
                    report.eval_rmse = Some(r);
                }
            }
            if let Some(dir) = checkpoint_dir {
                if self.config.checkpoint_every > 0 && done % self.config.checkpoint_every == 0 {
                    self.save(checkpoint_path(dir, done))?;
                }
            }
            on_report(&report);
            reports.push(report);
        }
        if reports.is_empty() && self.config.steps == 0 {
            warn!("training configured with zero steps");
        }
        Ok(reports)
    }
}

pub fn checkpoint_path(dir: &Path, step: usize) -> PathBuf {
    dir.join(format!("step_{step:07}.pgck"))
}

/// Result of a full training run.
#[derive(Debug)]
pub struct TrainOutcome {
    pub trainer: Trainer,
    pub reports: Vec<LossReport>,
}

/// Builds fresh networks and trains them for `config.steps` steps.
pub fn train(
    data: &Dataset,
    held_out: Option<&Dataset>,
    config: TrainConfig,
    direction: Direction,
    checkpoint_dir: Option<&Path>,
    device: Device,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config, direction, data, device)?;
    let reports = trainer.run(held_out, checkpoint_dir, |_| {})?;
    Ok(TrainOutcome { trainer, reports })
}
