use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use adam_pipe::config::{RunConfig, SEED_ENV};
use adam_pipe::pipeline::{cmd_evaluate, cmd_infer, cmd_report, cmd_train};
use adam_pipe::synth::cmd_synth;
use adam_pipe::{Error, Result};

/// Fundus analysis: AMD classification, optic disc, fovea and lesions.
#[derive(Parser)]
#[command(name = "adam-pipe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run config; defaults are used when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set gan.train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        RunConfig::load(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset with a manifest.
    Synth {
        #[arg(short, long, default_value_t = 32)]
        n: usize,
        #[arg(short, long, default_value_t = 256)]
        resolution: usize,
        /// Falls back to ADAM_PIPE_SEED, then 0.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train the configured task into its output directory.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Predict every image of a manifest.
    Infer {
        #[command(flatten)]
        config: ConfigArgs,
        /// Run directory or checkpoint directory.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Score a prediction file against a manifest.
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Defaults to the directory of the prediction file.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Summarize a run directory into summary.md.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { n, resolution, seed, out } => {
            let seed = match seed {
                Some(s) => s,
                None => match std::env::var(SEED_ENV) {
                    Ok(v) => v
                        .trim()
                        .parse()
                        .map_err(|_| Error::Config(vec![format!("{SEED_ENV} = `{v}` is not an integer")]))?,
                    Err(_) => 0,
                },
            };
            let m = cmd_synth(n, resolution, seed, &out)?;
            println!("wrote {} images to {}", m.len(), out.display());
        }
        Command::Train { config } => {
            let dir = cmd_train(&config.load()?)?;
            println!("{}", dir.display());
        }
        Command::Infer {
            config,
            checkpoint,
            manifest,
            out,
        } => {
            let p = cmd_infer(&config.load()?, &checkpoint, &manifest, &out)?;
            println!("{}", p.display());
        }
        Command::Evaluate {
            config,
            predictions,
            manifest,
            out,
        } => {
            let out = out.unwrap_or_else(|| predictions.parent().unwrap_or(Path::new(".")).to_path_buf());
            let r = cmd_evaluate(&config.load()?, &predictions, &manifest, &out)?;
            println!("{}", serde_json::to_string_pretty(&r).expect("report serializes"));
        }
        Command::Report { run } => print!("{}", cmd_report(&run)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}
