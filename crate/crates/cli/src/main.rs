use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use svn_cli::{cmd_compare, cmd_run, cmd_snapshot, Overrides};

#[derive(Parser)]
#[command(name = "svn", version, about = "Train and evaluate particle ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Overrides the method seed of every config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Comma-separated fold indices to run.
    #[arg(long, global = true, value_delimiter = ',')]
    folds: Option<Vec<usize>>,

    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true, env = "SVN_WORKERS")]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one config on each of its folds.
    Run { config: PathBuf },
    /// Run several configs on the same folds and write a joint table.
    Compare {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// Train one config and dump curvature matrices periodically.
    Snapshot { config: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    let over = Overrides {
        seed: cli.seed,
        out: cli.out,
        folds: cli.folds,
    };
    let result = match &cli.command {
        Command::Run { config } => cmd_run(config, &over),
        Command::Compare { configs } => cmd_compare(configs, &over),
        Command::Snapshot { config } => cmd_snapshot(config, &over),
    };
    match result {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
