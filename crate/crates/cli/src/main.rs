use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};
use ricci_experiments::{replay, run_config, CliError, ExperimentKind, Result, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "ricci", version, about = "Ricci-flow analysis of neural feature geometry")]
struct Cli {
    /// Worker threads for the global pool (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Use seeds 0..N instead of the configured list.
    #[arg(long)]
    seeds: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Local Ricci coefficient tables.
    Table(RunArgs),
    /// Modularity, normalized cut and curvature gap across layers.
    Community(RunArgs),
    /// Coefficient checkpoints during training with the early-stop rule.
    Monitor(RunArgs),
    /// Layer coefficients across depths and the recommended depth.
    DepthSweep(RunArgs),
    /// Preservation curves, ReLU rewiring and the gradient-descent sweep.
    Theory(RunArgs),
    /// Re-run the experiment recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory (default: `replay` next to the manifest).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run_file(kind: ExperimentKind, args: &RunArgs) -> Result<RunManifest> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    run_config(kind, value, args.seeds, &args.out)
}

fn run(cli: Cli) -> Result<RunManifest> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Table(a) => run_file(ExperimentKind::Table, a),
        Command::Community(a) => run_file(ExperimentKind::Community, a),
        Command::Monitor(a) => run_file(ExperimentKind::Monitor, a),
        Command::DepthSweep(a) => run_file(ExperimentKind::DepthSweep, a),
        Command::Theory(a) => run_file(ExperimentKind::Theory, a),
        Command::Replay { manifest, out } => {
            let out = out.clone().unwrap_or_else(|| {
                manifest.parent().unwrap_or(Path::new(".")).join("replay")
            });
            replay(manifest, &out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(m) => {
            info!("{} complete: {} outputs", m.experiment, m.outputs.len());
            ExitCode::SUCCESS
        }
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
