//! `expnls`: profiles, spectra, unstable modes and blow-up runs from the command line.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Settings;

#[derive(Debug, Parser)]
#[command(name = "expnls", version, about = "Solitary waves of the 2D Schrödinger equation with exponential nonlinearity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for the ground state; writes profile.json and profile.csv.
    Profile,
    /// Morse counts, kernels and the negative direction of L+.
    Spectrum,
    /// The real growing eigenvalue and its dynamics cross-check.
    UnstableMode,
    /// Evolve λΦ(λx) (first entry of --lambdas, default 1).
    Evolve,
    /// Blow-up runs for each rescaling factor in --lambdas.
    Blowup,
    /// Profiles and growth rates over a grid of parameters.
    Sweep {
        /// Comma-separated frequencies; defaults to --omega.
        #[arg(long, value_delimiter = ',')]
        omegas: Option<Vec<f64>>,
        /// Comma-separated μ values; defaults to --mu, else both.
        #[arg(long, value_delimiter = ',')]
        mus: Option<Vec<u8>>,
    },
    /// The acceptance checks for one (ω, μ).
    Verify,
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Solver(expnls_core::Error),
    Identity(Vec<String>),
    Message(String),
    Io(std::io::Error),
}

impl From<expnls_core::Error> for Failure {
    fn from(e: expnls_core::Error) -> Self {
        Failure::Solver(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 64,
            Failure::Identity(_) => 2,
            Failure::Solver(_) | Failure::Message(_) | Failure::Io(_) => 1,
        }
    }

    fn report(&self) {
        match self {
            Failure::Usage(m) => eprintln!("error: {m}"),
            Failure::Solver(e) => eprintln!("error: {e}"),
            Failure::Message(m) => eprintln!("error: {m}"),
            Failure::Io(e) => eprintln!("error: {e}"),
            Failure::Identity(list) => {
                for m in list {
                    eprintln!("check failed: {m}");
                }
            }
        }
    }
}

fn init_threads() -> Result<(), Failure> {
    let Ok(text) = std::env::var("EXPNLS_THREADS") else {
        return Ok(());
    };
    let n: usize = text
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("EXPNLS_THREADS must be a positive integer, got {text:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Message(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    init_threads()?;
    let s = cli.settings.resolve()?;
    s.validate()?;
    match cli.command {
        Command::Profile => commands::profile(&s),
        Command::Spectrum => commands::spectrum(&s),
        Command::UnstableMode => commands::unstable_mode(&s),
        Command::Evolve => commands::evolve_cmd(&s),
        Command::Blowup => commands::blowup(&s),
        Command::Sweep { omegas, mus } => commands::sweep(&s, omegas, mus),
        Command::Verify => commands::verify_cmd(&s),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(64) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            f.report();
            ExitCode::from(f.code())
        }
    }
}
