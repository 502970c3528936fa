//! `gina`: generate synthetic MNAR benchmarks, train imputation models and
//! evaluate them from the command line.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gina_core::dataio::AuxSource;
use gina_core::models::ModelKind;
use gina_core::synthdata::Dataset;

use config::{Preset, RunConfig};
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "gina", version, about = "Deep generative imputation for data missing not at random")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic benchmark: masked training CSV, complete CSVs and a generator sidecar.
    Generate {
        #[arg(long)]
        dataset: Option<Dataset>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        n_test: Option<usize>,
    },
    /// Fit a model and write it with its bound trace.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        /// Train one model per seed in parallel (capped by GINA_NUM_THREADS).
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Fill in missing entries with a trained model.
    Impute {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        samples: Option<usize>,
        /// Number of sampled completions to write besides the point estimate.
        #[arg(long)]
        emit_samples: Option<usize>,
    },
    /// Score predictions against ground truth (MSE and debiased MSE).
    Evaluate {
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Entries observed in this CSV are left out of scoring.
        #[arg(long)]
        exclude: Option<PathBuf>,
    },
    /// Rank models by energy distance between their samples and complete data.
    Probe {
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long = "model")]
        models: Vec<PathBuf>,
        /// Zero-based columns to compare.
        #[arg(long, value_delimiter = ',')]
        columns: Option<Vec<usize>>,
    },
    /// Sequential feature acquisition by information reward.
    Active {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// One-row CSV with a difficulty level per column.
        #[arg(long)]
        levels: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
    },
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long)]
    model_kind: Option<ModelKind>,
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    aux: Option<AuxArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AuxArg {
    Metadata,
    Mask,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn effective_config(cli: Cli) -> Result<(RunConfig, Command), CliError> {
    let mut c = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    set(&mut c.seed, cli.seed);
    if cli.out.is_some() {
        c.out = cli.out;
    }
    match &cli.command {
        Command::Generate { dataset, n, n_test } => {
            set(&mut c.data.dataset, *dataset);
            set(&mut c.data.n, *n);
            set(&mut c.data.n_test, *n_test);
        }
        Command::Train { data, model, seeds } => {
            set(&mut c.data.path, data.clone().map(Some));
            set(&mut c.model.kind, model.model_kind);
            set(&mut c.model.preset, model.preset);
            set(&mut c.train.epochs, model.epochs);
            set(&mut c.model.k, model.k.map(Some));
            set(&mut c.model.beta, model.beta.map(Some));
            let aux = model.aux.map(|a| match a {
                AuxArg::Metadata => AuxSource::Metadata,
                AuxArg::Mask => AuxSource::Mask,
            });
            set(&mut c.model.aux, aux.map(Some));
            set(&mut c.seeds, seeds.clone());
        }
        Command::Impute {
            model,
            data,
            samples,
            emit_samples,
        } => {
            set(&mut c.model.path, model.clone().map(Some));
            set(&mut c.data.path, data.clone().map(Some));
            set(&mut c.impute.samples, *samples);
            set(&mut c.impute.emit_samples, *emit_samples);
        }
        Command::Evaluate { pred, truth, exclude } => {
            set(&mut c.evaluate.pred, pred.clone().map(Some));
            set(&mut c.evaluate.truth, truth.clone().map(Some));
            set(&mut c.evaluate.exclude, exclude.clone().map(Some));
        }
        Command::Probe { truth, models, columns } => {
            set(&mut c.probe.truth, truth.clone().map(Some));
            if !models.is_empty() {
                c.probe.models = models.clone();
            }
            set(&mut c.probe.columns, columns.clone());
        }
        Command::Active {
            model,
            data,
            levels,
            steps,
        } => {
            set(&mut c.model.path, model.clone().map(Some));
            set(&mut c.data.path, data.clone().map(Some));
            set(&mut c.active.levels, levels.clone().map(Some));
            set(&mut c.active.steps, *steps);
        }
    }
    Ok((c, cli.command))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (config, command) = effective_config(cli)?;
    match command {
        Command::Generate { .. } => commands::generate(&config),
        Command::Train { .. } => commands::train_models(&config),
        Command::Impute { .. } => commands::impute(&config),
        Command::Evaluate { .. } => commands::evaluate(&config),
        Command::Probe { .. } => commands::probe(&config),
        Command::Active { .. } => commands::active(&config),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gina: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
