use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use pingpong_cli::{list_profiles, run, CliError, Command, Config, RunOptions};

#[derive(Parser)]
#[command(
    name = "pingpong",
    version,
    about = "Experiments on the gravity pingpong model"
)]
struct Cli {
    /// Experiment configuration (`key = value` lines with `[section]`s).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: `out` key, else `pingpong-out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Iterate the collision map or the limit map from one state.
    Simulate,
    /// Cone invariance, expansion constants and σ after N₀ steps.
    VerifyCones,
    /// Component counts and N₀-step expansion of short unstable curves.
    Fragmentation,
    /// Monte Carlo statistics (γ mean, Birkhoff, correlations, CLT, ...).
    Stats,
    /// Polylines of the singularity sets.
    Singularities,
    /// Run every section present in the config.
    Report,
    /// Show the built-in profile catalog.
    ListProfiles {
        /// Gravity used to classify the listed members.
        #[arg(long, default_value_t = 2.0)]
        g: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli) -> Result<u8, CliError> {
    let cmd = match cli.command {
        Cmd::ListProfiles { g } => {
            list_profiles(g, std::io::stdout().lock())?;
            return Ok(0);
        }
        Cmd::Simulate => Command::Simulate,
        Cmd::VerifyCones => Command::VerifyCones,
        Cmd::Fragmentation => Command::Fragmentation,
        Cmd::Stats => Command::Stats,
        Cmd::Singularities => Command::Singularities,
        Cmd::Report => Command::Report,
    };
    let cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let opts = RunOptions {
        seed: cli.seed,
        out: cli.out,
        threads: cli.threads,
    };
    let start = Instant::now();
    let manifest = run(&cfg, cmd, &opts)?;
    for e in &manifest.experiments {
        let status = match (e.pass, e.hard) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "WARN",
        };
        println!("[{status}] {} -> {}", e.name, e.outputs.join(", "));
    }
    // wall-clock goes to stderr so the output files stay reproducible
    eprintln!(
        "{} finished in {:.2} s (config {})",
        manifest.command,
        start.elapsed().as_secs_f64(),
        &manifest.config_hash[..12]
    );
    Ok(manifest.exit_code() as u8)
}
