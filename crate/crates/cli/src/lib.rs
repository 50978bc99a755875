//! Batch drivers behind the `porogan` binary: snapshot generation, training,
//! evaluation, inference, POD diagnostics and observation masks.

pub mod commands;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod generate;
pub mod plot;
pub mod training;

pub use config::{DatasetConfig, ExperimentConfig, FieldKind, Overrides, Split};
pub use error::{Error, Result};
