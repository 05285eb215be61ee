mod commands;
mod config;
mod golden;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(
    name = "tsvar",
    version,
    about = "Check and solve variational problems on time scales"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Problem configuration (JSON, schema_version 1).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for report.json and scan CSVs.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Transversality condition for `scan`; all conditions when omitted.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// What to print on stdout.
    #[arg(long, global = true, value_enum, default_value_t)]
    format: Format,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Check a candidate: admissibility, E-L residual, transversality, optional battery.
    Verify,
    /// Fit a candidate over the configured basis.
    Solve,
    /// Emit truncated-horizon transversality scans for the candidate.
    Scan,
    /// Run the integration-by-parts residual battery on the configured scale.
    IbpCheck,
    /// Reproduce the bundled examples and compare against golden results.
    Examples,
}

/// Whether the command's checks passed.
pub type Outcome = Result<bool, CliError>;

fn run(cli: &Cli) -> Outcome {
    let ctx = commands::Context {
        out: cli.out.clone(),
        k: cli.k,
        format: cli.format,
    };
    if let Command::Examples = cli.command {
        return commands::examples(&ctx);
    }
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Usage("--config PATH is required".into()))?;
    let loaded = config::ProblemConfig::load(path)?;
    match cli.command {
        Command::Verify => commands::verify(&loaded, &ctx),
        Command::Solve => commands::solve(&loaded, &ctx),
        Command::Scan => commands::scan(&loaded, &ctx),
        Command::IbpCheck => commands::ibp_check(&loaded, &ctx),
        Command::Examples => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("tsvar: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
