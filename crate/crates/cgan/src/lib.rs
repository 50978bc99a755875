//! Conditional GAN surrogate for steady poroelastic fields: a U-Net generator,
//! a patch discriminator, the base, spectral-norm and Wasserstein losses, and
//! the training loop for the forward and inverse directions.

pub mod checkpoint;
pub mod config;
pub mod device;
pub mod error;
pub mod infer;
pub mod losses;
pub mod nets;
pub mod optim;
pub mod schedule;
pub mod train;

pub use checkpoint::{dataset_digest, Checkpoint, CheckpointHeader};
pub use config::{
    AdamConfig, AdversarialForm, Direction, DiscriminatorSpec, GeneratorSpec, GpMode, Schedule,
    TrainConfig, Variant,
};
pub use device::{device_from_env, DEVICE_ENV};
pub use error::{Error, Result};
pub use infer::Rom;
pub use nets::{Discriminator, Generator, LayerShape};
pub use schedule::lr_schedule;
pub use train::{check_direction, train, LossReport, TrainOutcome, Trainer};
