use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use imp_cli::Output;
use imp_core::config::RunConfig;
use imp_core::{ErrorKind, Result};

#[derive(Parser)]
#[command(name = "imp", version, about = "Train and evaluate few-shot classifiers that represent each class by a mixture of clusters")]
#[command(after_long_help = long_help())]
struct Cli {
    /// Configuration file (IMPCFG v1); defaults apply to missing keys
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides run.seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides run.out
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replace existing output files
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with splits (and a label mask when data.label_fraction < 1)
    Gen,
    /// Train the configured model; writes checkpoint.bin, train.jsonl, train.csv, config.txt
    Train,
    /// Evaluate a checkpoint; writes eval.csv and eval_episodes.csv
    Eval,
    /// Unsupervised clustering with imp, dp_means, map_dp and em; writes cluster.csv and cluster_assignments.csv
    Cluster,
    /// Sweep lambda for IMP and DP-means; writes sweep_lambda.csv
    SweepLambda,
    /// Finite-difference gradient checks; writes gradcheck.csv
    Gradcheck,
}

fn long_help() -> String {
    format!(
        "Configuration keys (section, key = default):\n\n{}\n\
         Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.\n\
         Log verbosity is read from IMP_LOG_LEVEL (error, warn, info, debug; default info).",
        RunConfig::key_help()
    )
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.to_string_lossy().into_owned();
    }
    cfg.validate()?;
    let out = Output::new(&cfg, cli.force);
    match cli.command {
        Command::Gen => imp_cli::cmd_gen(&cfg, &out).map(drop),
        Command::Train => imp_cli::cmd_train(&cfg, &out),
        Command::Eval => imp_cli::cmd_eval(&cfg, &out).map(drop),
        Command::Cluster => imp_cli::cmd_cluster(&cfg, &out),
        Command::SweepLambda => imp_cli::cmd_sweep_lambda(&cfg, &out).map(drop),
        Command::Gradcheck => imp_cli::cmd_gradcheck(&cfg, &out).map(drop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("IMP_LOG_LEVEL", "info"))
        .format_timestamp_millis()
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numeric => 4,
            })
        }
    }
}
