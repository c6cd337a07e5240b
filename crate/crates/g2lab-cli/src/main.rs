mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CliError, Sink};
use config::ExperimentConfig;

/// Numerical experiments on closed G2-structures over a flat 7-torus.
#[derive(Parser, Debug)]
#[command(name = "g2lab", version)]
struct Cli {
    /// key=value configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV and SVG files.
    #[arg(long, global = true, default_value = "g2lab-out")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Omit the timestamp header line from CSV files.
    #[arg(long, global = true)]
    no_timestamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pointwise G2 identities and exterior-algebra properties.
    VerifyIdentities {
        /// Perturb ψ away from *φ so the identities must fail.
        #[arg(long)]
        corrupt_psi: bool,
    },
    /// Variation formulas against central differences.
    VerifyVariations,
    /// Connection compatibility, torsion and contorsion.
    Connections,
    /// Runs the configured flow and writes its monitor.
    Flow,
    /// Integrates a geodesic and tracks its speed.
    Geodesic,
    /// Curvature formulas, Bakry-Emery bounds and the Ebin pullback.
    Curvature,
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let sink = Sink::new(cli.out.clone(), !cli.no_timestamp)?;
    match cli.command {
        Command::VerifyIdentities { corrupt_psi } => commands::verify_identities(&cfg, &sink, corrupt_psi),
        Command::VerifyVariations => commands::verify_variations(&cfg, &sink),
        Command::Connections => commands::connections(&cfg, &sink),
        Command::Flow => commands::flow(&cfg, &sink),
        Command::Geodesic => commands::geodesic(&cfg, &sink),
        Command::Curvature => commands::curvature(&cfg, &sink),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
