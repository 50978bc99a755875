use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Loss family of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Binary cross-entropy on patch probabilities.
    Base,
    /// As `Base`, with spectrally normalized discriminator weights.
    Sn,
    /// Wasserstein critic with gradient penalty.
    W,
}

impl Variant {
    pub fn uses_spectral_norm(self) -> bool {
        self == Variant::Sn
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::Sn => "sn",
            Variant::W => "w",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Permeability to pressure and displacement.
    Forward,
    /// Observed pressure and displacement to permeability.
    Inverse,
}

/// Generator adversarial term of the base and SN variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdversarialForm {
    /// Minimize `-log D(I, O_hat)`.
    #[default]
    NonSaturating,
    /// Minimize `log(1 - D(I, O_hat))`.
    Saturating,
}

/// How the gradient penalty evaluates the critic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GpMode {
    /// One critic pass per batch element, so batch statistics never couple samples.
    #[default]
    PerSample,
    /// One critic pass over the whole mixed batch.
    Batched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub in_channels: i64,
    pub out_channels: i64,
    #[serde(default = "GeneratorSpec::default_hidden")]
    pub hidden: i64,
    #[serde(default = "GeneratorSpec::default_depth")]
    pub depth: usize,
    /// Contracting blocks (1-based, counted from the input) that apply dropout.
    #[serde(default = "GeneratorSpec::default_dropout_blocks")]
    pub dropout_blocks: usize,
    #[serde(default = "GeneratorSpec::default_dropout")]
    pub dropout: f64,
}

impl GeneratorSpec {
    fn default_hidden() -> i64 {
        32
    }
    fn default_depth() -> usize {
        6
    }
    fn default_dropout_blocks() -> usize {
        3
    }
    fn default_dropout() -> f64 {
        0.5
    }

    pub fn new(in_channels: i64, out_channels: i64) -> Self {
        Self {
            in_channels,
            out_channels,
            hidden: Self::default_hidden(),
            depth: Self::default_depth(),
            dropout_blocks: Self::default_dropout_blocks(),
            dropout: Self::default_dropout(),
        }
    }

    pub fn with_hidden(mut self, hidden: i64) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels < 1 || self.out_channels < 1 || self.hidden < 1 || self.depth < 1 {
            return Err(Error::Config(format!("invalid generator spec {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Spatial sizes must halve `depth` times.
    pub fn check_spatial(&self, height: i64, width: i64) -> Result<()> {
        let factor = 1i64 << self.depth;
        if height % factor != 0 || width % factor != 0 || height < factor || width < factor {
            return Err(Error::Config(format!(
                "spatial size {height}x{width} is not divisible by 2^{}",
                self.depth
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorSpec {
    /// Channels of the conditioning field.
    pub condition_channels: i64,
    /// Channels of the real or generated field; also the patch output channels.
    pub target_channels: i64,
    #[serde(default = "DiscriminatorSpec::default_hidden")]
    pub hidden: i64,
    #[serde(default = "DiscriminatorSpec::default_depth")]
    pub depth: usize,
    #[serde(default)]
    pub spectral_norm: bool,
    /// Power iterations per training forward pass of each normalized weight.
    #[serde(default = "DiscriminatorSpec::default_power_iterations")]
    pub power_iterations: usize,
}

impl DiscriminatorSpec {
    fn default_hidden() -> i64 {
        8
    }
    fn default_depth() -> usize {
        4
    }
    fn default_power_iterations() -> usize {
        1
    }

    pub fn new(condition_channels: i64, target_channels: i64) -> Self {
        Self {
            condition_channels,
            target_channels,
            hidden: Self::default_hidden(),
            depth: Self::default_depth(),
            spectral_norm: false,
            power_iterations: Self::default_power_iterations(),
        }
    }

    pub fn in_channels(&self) -> i64 {
        self.condition_channels + self.target_channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.condition_channels < 1
            || self.target_channels < 1
            || self.hidden < 1
            || self.depth < 1
            || self.power_iterations < 1
        {
            return Err(Error::Config(format!("invalid discriminator spec {self:?}")));
        }
        Ok(())
    }
}

/// Cosine schedule bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub eta_min: f64,
    pub eta_max: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            eta_min: 1e-16,
            eta_max: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub variant: Variant,
    pub lambda_r: f64,
    pub lambda_p: f64,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub schedule: Schedule,
    /// Total steps; also the schedule's `step_f`.
    pub steps: usize,
    /// Zero disables periodic checkpoints.
    pub checkpoint_every: usize,
    /// Zero disables periodic evaluation.
    pub eval_every: usize,
    pub seed: u64,
    pub adversarial_form: AdversarialForm,
    pub gp_mode: GpMode,
    /// Generator width; the discriminator keeps its own default unless set.
    pub generator_hidden: i64,
    pub discriminator_hidden: i64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::W,
            lambda_r: 500.0,
            lambda_p: 10.0,
            batch_size: 4,
            adam: AdamConfig::default(),
            schedule: Schedule::default(),
            steps: 20_000,
            checkpoint_every: 1_000,
            eval_every: 500,
            seed: 0,
            adversarial_form: AdversarialForm::default(),
            gp_mode: GpMode::default(),
            generator_hidden: 32,
            discriminator_hidden: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_r >= 0.0 && self.lambda_p >= 0.0) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        let s = self.schedule;
        if !(s.eta_min >= 0.0 && s.eta_max >= s.eta_min) {
            return Err(Error::Config(format!("invalid learning-rate bounds {s:?}")));
        }
        let a = self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::Config(format!("invalid Adam settings {a:?}")));
        }
        if self.generator_hidden < 1 || self.discriminator_hidden < 1 {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }

    pub fn generator_spec(&self, in_channels: i64, out_channels: i64) -> GeneratorSpec {
        GeneratorSpec::new(in_channels, out_channels).with_hidden(self.generator_hidden)
    }

    pub fn discriminator_spec(&self, condition: i64, target: i64) -> DiscriminatorSpec {
        DiscriminatorSpec {
            hidden: self.discriminator_hidden,
            spectral_norm: self.variant.uses_spectral_norm(),
            ..DiscriminatorSpec::new(condition, target)
        }
    }
}
