use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use porogan_cgan::{device_from_env, Direction};
use porogan_cli::commands::{run_infer, run_mask, run_pod};
use porogan_cli::evaluate::run_evaluate;
use porogan_cli::generate::generate;
use porogan_cli::training::run_training;
use porogan_cli::{Error, ExperimentConfig, Overrides, Result};
use porogan_core::dataset::{Channel, MaskMode};

#[derive(Parser)]
#[command(name = "porogan", version, about = "Conditional GAN surrogate for steady poroelasticity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Forward,
    Inverse,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChannelArg {
    LogK,
    P,
    Ux,
    Uy,
}

impl From<ChannelArg> for Channel {
    fn from(c: ChannelArg) -> Self {
        match c {
            ChannelArg::LogK => Channel::LogK,
            ChannelArg::P => Channel::P,
            ChannelArg::Ux => Channel::Ux,
            ChannelArg::Uy => Channel::Uy,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MaskModeArg {
    Uniform,
    Random,
}

#[derive(Args)]
struct Experiment {
    /// Experiment config (JSON); defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed of the field generator.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    direction: Option<DirectionArg>,
    /// Cells per side of a square grid.
    #[arg(long)]
    resolution: Option<usize>,
}

impl Experiment {
    fn load(&self) -> Result<ExperimentConfig> {
        let base = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        base.apply(&Overrides {
            seed: self.seed,
            out: self.out.clone(),
            direction: self.direction.map(|d| match d {
                DirectionArg::Forward => Direction::Forward,
                DirectionArg::Inverse => Direction::Inverse,
            }),
            resolution: self.resolution,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate fields, solve the full-order model and assemble train/test datasets.
    Generate(Experiment),
    /// Train the surrogate on the run's training split.
    Train {
        #[command(flatten)]
        experiment: Experiment,
        /// Resume from this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Accuracy, correlation and cost report of a checkpoint, with plots.
    Evaluate {
        #[command(flatten)]
        experiment: Experiment,
        /// Defaults to the run's final checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Dataset directory; defaults to the run's test split.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Predict the target fields of every sample of a dataset.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset directory with matching roles and grid.
        #[arg(long)]
        input: PathBuf,
        /// Output JSON file.
        #[arg(long)]
        out: PathBuf,
    },
    /// POD spectrum of one channel of a dataset.
    Pod {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "p")]
        channel: ChannelArg,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write an observation mask, one byte per cell.
    Mask {
        #[arg(long)]
        resolution: usize,
        #[arg(long, default_value_t = 0.03)]
        fraction: f64,
        #[arg(long, value_enum, default_value = "random")]
        mode: MaskModeArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    let device = || device_from_env().map_err(|e| Error::Usage(e.to_string()));
    match cli.command {
        Command::Generate(e) => {
            let summary = generate(&e.load()?)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Train {
            experiment,
            checkpoint,
        } => {
            let cfg = experiment.load()?;
            let summary = run_training(&cfg, checkpoint.as_deref(), device()?)?;
            println!("trained {} steps; final checkpoint {}", summary.steps, summary.final_checkpoint.display());
        }
        Command::Evaluate {
            experiment,
            checkpoint,
            dataset,
        } => {
            let cfg = experiment.load()?;
            let ckpt = checkpoint.unwrap_or_else(|| cfg.final_checkpoint());
            let report = run_evaluate(&cfg, &ckpt, dataset.as_deref(), device()?)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Infer {
            checkpoint,
            input,
            out,
        } => {
            let p = run_infer(&checkpoint, &input, &out, device()?)?;
            println!("wrote {} fields to {}", p.fields.len(), out.display());
        }
        Command::Pod { dataset, channel, out } => {
            let r = run_pod(&dataset, channel.into(), &out)?;
            println!("{}", serde_json::to_string(&r.spectrum)?);
        }
        Command::Mask {
            resolution,
            fraction,
            mode,
            seed,
            out,
        } => {
            let mode = match mode {
                MaskModeArg::Uniform => MaskMode::Uniform,
                MaskModeArg::Random => MaskMode::Random,
            };
            let mask = run_mask(resolution, fraction, mode, seed, &out)?;
            println!("{} of {} cells observed", mask.count(), mask.cells());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
