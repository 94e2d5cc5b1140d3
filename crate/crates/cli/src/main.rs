use std::path::PathBuf;
use std::process::ExitCode;

use absa_cli::{cmd_build, cmd_evaluate, cmd_infer, cmd_stats, CliError, RunConfig};
use absa_core::prompt::PromptLanguagePolicy;
use absa_core::TaskArity;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "absa", version, about = "Build prompts, query endpoints and score ABSA quad predictions")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured shuffle seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the prompt language policy.
    #[arg(long, global = true, value_enum)]
    policy: Option<Policy>,
    /// Score raw predictions without span realignment.
    #[arg(long, global = true)]
    no_repair: bool,
    #[arg(long, global = true, value_enum)]
    arity: Option<Arity>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    En,
    Fr,
    Mix,
}

#[derive(Clone, Copy, ValueEnum)]
enum Arity {
    Quad,
    Triple,
}

#[derive(Subcommand)]
enum Command {
    /// Descriptive statistics per dataset file.
    Stats { datasets: Vec<PathBuf> },
    /// Export SFT pairs per dataset plus a multi-domain mix.
    Build,
    /// Send prompts to the configured endpoint, resuming where a previous run stopped.
    Infer {
        #[arg(long)]
        prompts: PathBuf,
        /// Defaults to <out>/predictions.jsonl.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Failure table and strict/relaxed scores for a predictions file.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        /// Defaults to the configured datasets.
        datasets: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(policy) = cli.policy {
        config.prompt_language_policy = match policy {
            Policy::En => PromptLanguagePolicy::EnglishOnly,
            Policy::Fr => PromptLanguagePolicy::FrenchOnly,
            Policy::Mix => PromptLanguagePolicy::Mixed,
        };
    }
    if let Some(arity) = cli.arity {
        config.arity = match arity {
            Arity::Quad => TaskArity::Quad,
            Arity::Triple => TaskArity::Triple,
        };
    }
    if cli.no_repair {
        config.repair_spans = false;
    }

    match cli.command {
        Command::Stats { datasets } => {
            let datasets = if datasets.is_empty() { config.datasets.clone() } else { datasets };
            print!("{}", cmd_stats(&config, &datasets)?);
        }
        Command::Build => {
            for path in cmd_build(&config, &cli.out)? {
                println!("{}", path.display());
            }
        }
        Command::Infer { prompts, predictions } => {
            let predictions = predictions.unwrap_or_else(|| cli.out.join("predictions.jsonl"));
            let s = cmd_infer(&config, &prompts, &predictions)?;
            println!(
                "{} prompts: {} already done, {} sent, {} errors -> {}",
                s.total,
                s.skipped,
                s.issued,
                s.errors,
                predictions.display()
            );
        }
        Command::Evaluate { predictions, datasets } => {
            let (report, _) = cmd_evaluate(&config, &predictions, &datasets, &cli.out)?;
            print!("{report}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("absa: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
