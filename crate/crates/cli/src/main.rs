//! `aeromap`: batch front end for synthetic scenes, preprocessing,
//! training, ablation, mapping and evaluation.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use aeromap::io::PipelineConfig;
use aeromap::models::ModelKind;
use aeromap::{Error, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "aeromap",
    version,
    about = "PM2.5 maps from satellite AOD and gridded meteorology"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Pipeline config (JSON). Omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// AOD window side length override (odd).
    #[arg(long, global = true)]
    window_size: Option<usize>,
    /// Model kind override, e.g. `gradient_boosting`.
    #[arg(long, global = true)]
    model: Option<String>,
    /// Worker thread cap. Results do not depend on it.
    #[arg(long, global = true, env = "AEROMAP_THREADS")]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene as a data directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Build training samples from a data directory.
    Preprocess {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split, fit, evaluate and cross-validate one model.
    Train {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refit with the cumulative feature-removal settings.
    Ablate {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Produce daily, monthly and yearly PM2.5 grids.
    Map {
        #[arg(long = "model-file")]
        model_file: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `state.json` from `preprocess`; refitted from `--data` when absent.
        #[arg(long)]
        state: Option<PathBuf>,
        #[arg(long)]
        from: Option<NaiveDate>,
        #[arg(long)]
        to: Option<NaiveDate>,
    },
    /// Score a saved model on a samples file.
    Eval {
        #[arg(long = "model-file")]
        model_file: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(g: &GlobalArgs) -> Result<PipelineConfig> {
    let mut config = match &g.config {
        Some(p) => PipelineConfig::read(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = g.seed {
        config.seed = s;
    }
    if let Some(w) = g.window_size {
        config.window_size = w;
    }
    if let Some(m) = &g.model {
        config.model = m.parse::<ModelKind>()?;
    }
    if g.threads.is_some() {
        config.threads = g.threads;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli.global)?;
    if let Some(n) = config.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start {n} threads: {e}")))?;
    }
    let config_path = cli.global.config.as_deref();
    match cli.command {
        Command::Synth { out } => commands::synth(&config, config_path, &out),
        Command::Preprocess { data, out } => commands::preprocess(&config, config_path, &data, &out),
        Command::Train { samples, out } => commands::train(&config, config_path, &samples, &out),
        Command::Ablate { samples, out } => commands::ablate(&config, config_path, &samples, &out),
        Command::Map {
            model_file,
            data,
            out,
            state,
            from,
            to,
        } => commands::map(
            &config,
            config_path,
            &commands::MapArgs {
                model: model_file,
                data,
                out,
                state,
                from,
                to,
            },
        ),
        Command::Eval {
            model_file,
            samples,
            out,
        } => commands::eval(&config, config_path, &model_file, &samples, &out),
    }
}

fn error_json(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": { "kind": kind, "message": message } }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            println!("{}", error_json("usage", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            println!("{}", error_json(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}
