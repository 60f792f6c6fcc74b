use clap::{Parser, Subcommand};
use std::path::PathBuf;
use warynav_cli::{cmd_compare, cmd_evaluate, cmd_toy1d, cmd_train, Overrides};

#[derive(Parser)]
#[command(
    name = "warynav",
    about = "Uncertainty-aware dynamic collision avoidance: train, evaluate and compare dropout-ensemble policies",
    version
)]
struct Cli {
    /// Worker threads (default: available parallelism). Results are
    /// identical at any thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the observe-act-train cycle and write a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory override.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Root seed override.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a trained checkpoint across novelty scenarios.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Ensemble checkpoint directory.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Evaluate at paper scale (20 sessions x 50 episodes).
        #[arg(long)]
        full_scale: bool,
    },
    /// 1D regional-novelty experiment.
    Toy1d {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train aware + unaware models and compare them per scenario.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Reuse checkpoints from a previous compare run (expects aware/
        /// and unaware/ subdirectories) instead of retraining.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        full_scale: bool,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("warning: could not configure thread pool: {e}");
        }
    }
    let result = match &cli.command {
        Command::Train { config, out, seed } => cmd_train(
            config,
            &Overrides {
                out: out.clone(),
                seed: *seed,
                full_scale: false,
            },
        ),
        Command::Eval {
            config,
            checkpoint,
            out,
            seed,
            full_scale,
        } => cmd_evaluate(
            config,
            checkpoint,
            &Overrides {
                out: out.clone(),
                seed: *seed,
                full_scale: *full_scale,
            },
        ),
        Command::Toy1d { config, out, seed } => cmd_toy1d(
            config,
            &Overrides {
                out: out.clone(),
                seed: *seed,
                full_scale: false,
            },
        ),
        Command::Compare {
            config,
            checkpoint,
            out,
            seed,
            full_scale,
        } => cmd_compare(
            config,
            checkpoint.as_deref(),
            &Overrides {
                out: out.clone(),
                seed: *seed,
                full_scale: *full_scale,
            },
        ),
    };
    if let Err(err) = result {
        eprintln!("{err}");
        std::process::exit(err.exit_code());
    }
}
