//! `potts-sir`: simulate, fit, summarize, grid-search and render.

mod commands;
mod grid;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Bayesian scalar-on-image regression with Potts-Gibbs partition priors.
///
/// Run and grid configs are JSON files. Every field is optional and falls
/// back to the documented default; the resolved configuration is echoed to
/// `config.json` in each output directory.
///
/// Exit codes: 0 success, 1 numerical failure, 2 usage or input error.
#[derive(Debug, Parser)]
#[command(name = "potts-sir", version)]
struct Cli {
    /// Only report errors.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a planted-coefficient dataset with a held-out test set.
    ///
    /// Config fields (defaults): scenario ("scenario1" | "scenario2"),
    /// seed (0), rho (0.3), sigma2 (1), n_train (300), n_test (100),
    /// intercept (1).
    Simulate(SimulateArgs),
    /// Run the Gibbs sampler on a dataset directory.
    ///
    /// Config fields (defaults): iterations (5000), burn_in (2000), thin (2),
    /// chains (1), seed (0), model ({"type": "dp", "alpha": 1}; also
    /// {"type": "py", "alpha", "delta"} and {"type": "mfm", "gamma",
    /// "lambda"}), gsw ({"kappa": 0.5, "tau": 1, "h": 1}), hyper
    /// ({"m_mu": [0], "c_mu": [100], "a_sigma": 1, "b_sigma": 1, "a_eta": 1,
    /// "b_eta": 1}), upsilon (2/3), init ({"type": "tiles", "size": 5};
    /// also "one_cluster", "singletons", {"type": "random_k", "k"}), eta
    /// ({"type": "sampled"} or {"type": "fixed", "value"}).
    Fit(FitArgs),
    /// Compute ARI/VI/MSE/MSPE/M per draw, their moments and the minVI estimate.
    Summarize(SummarizeArgs),
    /// Fit every cell of a hyperparameter grid and rank by validation MSPE.
    ///
    /// Config fields: base (a fit config), upsilon, kappa, tau, models
    /// (lists; an absent list keeps the base value), validation_fraction
    /// (0.25, taken from the end of the training rows).
    Gridsearch(GridArgs),
    /// Write PPM heatmaps and CSV grids of the true and estimated coefficients.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
struct Overrides {
    /// Override the configured RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured number of chains.
    #[arg(long)]
    chains: Option<usize>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Scenario config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario name when no config is given.
    #[arg(long, default_value = "scenario1")]
    scenario: String,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Dataset directory (lattice.json, y.csv, W.csv, X.csv).
    #[arg(long)]
    data: PathBuf,
    /// Run config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output fit directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Args)]
struct SummarizeArgs {
    /// Fit directory written by `fit`.
    #[arg(long)]
    fit: PathBuf,
    /// Dataset directory; its truth.json and test/ enable ARI, VI, MSE and MSPE.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory [default: <fit>/summary].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Grid config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for grid.csv.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Args)]
struct RenderArgs {
    /// Fit directory written by `fit`.
    #[arg(long)]
    fit: PathBuf,
    /// Summary directory [default: <fit>/summary].
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Dataset directory; its truth.json adds the true coefficient image.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory [default: <fit>/render].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Pixels per lattice cell in the images.
    #[arg(long, default_value_t = 1)]
    scale: usize,
}

#[derive(Debug)]
pub enum CliError {
    Core(potts_sir::Error),
    Usage(String),
}

impl From<potts_sir::Error> for CliError {
    fn from(e: potts_sir::Error) -> Self {
        Self::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Core(e) if e.is_numerical() => 1,
            _ => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Core(e) => write!(f, "{e}"),
            Self::Usage(m) => f.write_str(m),
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a.config.as_deref(), &a.scenario, &a.out, a.seed),
        Command::Fit(a) => commands::fit(
            &a.data,
            a.config.as_deref(),
            &a.out,
            a.overrides.seed,
            a.overrides.chains,
        ),
        Command::Summarize(a) => {
            let out = a.out.unwrap_or_else(|| a.fit.join("summary"));
            commands::summarize(&a.fit, a.data.as_deref(), &out)
        }
        Command::Gridsearch(a) => grid::gridsearch(&a.data, &a.config, &a.out, a.overrides.seed, a.overrides.chains),
        Command::Render(a) => {
            let summary = a.summary.unwrap_or_else(|| a.fit.join("summary"));
            let out = a.out.unwrap_or_else(|| a.fit.join("render"));
            render::render(&a.fit, &summary, a.data.as_deref(), &out, a.scale)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
