mod config;
mod fit;
mod manifest;
mod report;
mod risk;
mod simulate;
mod svg;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fsvol::data::ArSign;
use fsvol::risk::CovarMode;
use fsvol::Error;

/// Bayesian factor stochastic volatility: fit, simulate, risk and report.
#[derive(Debug, Parser)]
#[command(name = "fsvol", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the model to a price CSV and write draws, diagnostics and summaries.
    Fit(FitArgs),
    /// Generate a synthetic price panel from a named fixture or a truth file.
    Simulate(SimulateArgs),
    /// Compute VaR and CoVaR series from a fitted store.
    Risk(RiskArgs),
    /// Draw SVG charts and write the underlying CSVs for a fitted store.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SignArg {
    Plus,
    Minus,
}

impl From<SignArg> for ArSign {
    fn from(s: SignArg) -> Self {
        match s {
            SignArg::Plus => ArSign::Plus,
            SignArg::Minus => ArSign::Minus,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    MedianSigma,
    PerDraw,
}

impl From<ModeArg> for CovarMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::MedianSigma => CovarMode::MedianSigma,
            ModeArg::PerDraw => CovarMode::PerDraw,
        }
    }
}

/// Overrides applied on top of the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelFlags {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Post-burn-in sweeps.
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub factors: Option<usize>,
    /// Comma-separated posterior quantiles, e.g. `0.1,0.5,0.9`.
    #[arg(long, value_delimiter = ',')]
    pub quantiles: Option<Vec<f64>>,
    /// Independent chains; chain 0 feeds the summaries.
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long, value_enum)]
    pub ar_sign: Option<SignArg>,
    /// Run the blocks of each sweep on all cores.
    #[arg(long)]
    pub parallel: bool,
    /// Wall-clock budget per chain; on overrun a checkpoint is written.
    #[arg(long)]
    pub max_seconds: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Price CSV: `date` column followed by one column per series.
    #[arg(long)]
    pub input: PathBuf,
    /// TOML file with `[model]`, `[prior]` and `[run]` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub flags: ModelFlags,
    /// Continue an interrupted fit from `<out>/checkpoint`.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// One of `tiny`, `paper-shape`, `recovery`.
    #[arg(long, conflicts_with = "truth", required_unless_present = "truth")]
    pub fixture: Option<String>,
    /// Truth file as written by a previous `simulate`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Replace the generating seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replace the number of returns.
    #[arg(long)]
    pub n_obs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RiskArgs {
    /// Store directory written by `fit` (the `store/` folder or its parent).
    #[arg(long)]
    pub store: PathBuf,
    /// TOML query file; without it every series gets the default query.
    #[arg(long)]
    pub query: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated levels; default 0.01,0.05,0.95,0.99.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub covar_mode: Option<ModeArg>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Dates for correlation heatmaps; default is the last date.
    #[arg(long, value_delimiter = ',')]
    pub dates: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub quantiles: Option<Vec<f64>>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Invalid(_) | Error::Format { .. } => 2,
        Error::Numerical { .. } | Error::SingularConditioning { .. } | Error::BudgetExceeded { .. } => 3,
        Error::Io { .. } => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => fit::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Risk(a) => risk::run(a),
        Command::Report(a) => report::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                Error::Invalid(v) => {
                    eprintln!("error: invalid input");
                    for x in v {
                        eprintln!("  [{}] {}", x.code, x.message);
                    }
                }
                Error::BudgetExceeded { checkpoint: Some(p), sweep } => {
                    eprintln!("error: wall-clock budget exceeded after sweep {sweep}");
                    eprintln!("  checkpoint written to {}; rerun with --resume to continue", p.display());
                }
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
