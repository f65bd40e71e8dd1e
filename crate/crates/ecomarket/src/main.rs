use std::path::PathBuf;
use std::process;

use clap::{Args, Parser, Subcommand};
use ecomarket::{parse_config, run_experiment, ExitCode, Mode, Overrides, PopulationKind};

/// Artificial stock market with heterogeneous learning agents.
#[derive(Parser)]
#[command(name = "ecomarket", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate episodes and write logs, book snapshots and bars.
    Sim(Flags),
    /// Train the shared policy and write a checkpoint and curves.
    Train(Flags),
    /// Rank trait-prior (or baseline) candidates by OT distance to a reference.
    Calibrate(Flags),
    /// Stylized facts and OT distance of simulated or ingested bars.
    Analyze(Flags),
    /// Discounted-utility table across heterogeneity ablations.
    Ablate(Flags),
}

#[derive(Args)]
struct Flags {
    /// TOML run configuration; absent keys take reference defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_enum)]
    population: Option<PopulationKind>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    jobs: Option<usize>,
    /// Policy checkpoint for learning populations.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Bar CSV to analyze.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Reference bar CSV for calibration and analysis.
    #[arg(long)]
    reference: Option<PathBuf>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { ExitCode::Usage } else { ExitCode::Success };
            let _ = e.print();
            process::exit(code as i32);
        }
    };
    let (mode, flags) = match cli.command {
        Command::Sim(f) => (Mode::Sim, f),
        Command::Train(f) => (Mode::Train, f),
        Command::Calibrate(f) => (Mode::Calibrate, f),
        Command::Analyze(f) => (Mode::Analyze, f),
        Command::Ablate(f) => (Mode::Ablate, f),
    };
    let overrides = Overrides {
        mode: Some(mode),
        seed: flags.seed,
        out: flags.out,
        episodes: flags.episodes,
        trials: flags.trials,
        population: flags.population,
        jobs: flags.jobs,
        checkpoint: flags.checkpoint,
        input: flags.input,
        reference: flags.reference,
    };
    let result = parse_config(flags.config.as_deref(), &overrides)
        .map_err(ecomarket::Error::from)
        .and_then(|cfg| run_experiment(&cfg));
    match result {
        Ok(art) => {
            for f in &art.files {
                log::info!("wrote {}", f.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            process::exit(e.exit_code() as i32);
        }
    }
}
