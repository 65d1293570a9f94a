//! `prism`: data generation, training, evaluation and analysis from one
//! plain-text config.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::LazyLock;

use clap::{Parser, Subcommand};

use config::{key_help, RunConfig, SEED_ENV};
use error::CliError;

static KEY_HELP: LazyLock<String> = LazyLock::new(key_help);

#[derive(Parser, Debug)]
#[command(
    name = "prism",
    version,
    about = "Multi-resolution symmetric filter-bank classifiers"
)]
#[command(after_help = KEY_HELP.as_str())]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Built-in starting point: default | isruc-small.
    #[arg(long, global = true, default_value = "default")]
    preset: String,

    /// Config file of `key = value` lines, applied over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one key, e.g. `--set epochs=5`. Repeatable; applied last.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Output directory for artifacts and the manifest.
    #[arg(long, global = true, default_value = "prism-out")]
    out: PathBuf,

    /// Worker threads for ablation rows; everything else is single-threaded.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Write the synthetic frequency-band dataset.
    Synth,
    /// Train and keep the best-validation checkpoint.
    Train,
    /// Score a checkpoint on the test split.
    Eval,
    /// Closed-form parameter and FLOP counts.
    Complexity,
    /// Filter magnitude spectra and their pairwise diversity.
    Spectra,
    /// Accuracy across kernel sets or filters per scale.
    Ablate,
    /// Certify backward passes against finite differences.
    Gradcheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Complexity => "complexity",
            Command::Spectra => "spectra",
            Command::Ablate => "ablate",
            Command::Gradcheck => "gradcheck",
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::preset(&cli.preset)?;
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Ok(seed) = std::env::var(SEED_ENV) {
        cfg.set("seed", &seed)
            .map_err(|e| CliError::Config(format!("{SEED_ENV}: {}", e.message())))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve(cli)?;
    if cli.jobs == 0 {
        return Err(CliError::Config("--jobs must be >= 1".into()));
    }
    let mut out = commands::Output::create(&cli.out)?;
    out.write("config.resolved.txt", cfg.to_text().as_bytes())?;
    let result = match cli.command {
        Command::Synth => commands::synth(&cfg, &mut out),
        Command::Train => commands::train_cmd(&cfg, &mut out),
        Command::Eval => commands::eval(&cfg, &mut out),
        Command::Complexity => commands::complexity(&cfg, &mut out),
        Command::Spectra => commands::spectra(&cfg, &mut out),
        Command::Ablate => commands::ablate(&cfg, cli.jobs, &mut out),
        Command::Gradcheck => commands::gradcheck(&cfg, &mut out),
    };
    // The manifest is written even when the command fails part-way.
    out.finish(cli.command.name())?;
    result
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.diagnostic());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
