mod config;
mod fit;
mod moments;
mod report;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use msls::persist::ModelKind;

#[derive(Parser)]
#[command(name = "msls", version, about = "Simulate, fit and compare Markov-switching latent-space network models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a layer and write edges.csv, leaning.csv and truth.json.
    Simulate {
        /// TOML scenario; omitted keys keep their defaults.
        config: Option<PathBuf>,
        /// Output directory, created if missing.
        #[arg(short, long, default_value = "sim")]
        out: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a model and write a chain directory.
    Fit {
        /// Edge list (i,j,t,w).
        #[arg(long, required_unless_present = "layers", conflicts_with = "layers")]
        edges: Option<PathBuf>,
        /// Leaning proxies (i,t,leaning).
        #[arg(long, required_unless_present = "layers", conflicts_with = "layers")]
        leaning: Option<PathBuf>,
        /// Exposure series (t,exposure).
        #[arg(long, conflicts_with = "layers")]
        exposure: Option<PathBuf>,
        /// Layer directories holding edges.csv, leaning.csv and optionally
        /// exposure.csv; fitted concurrently, one RNG stream per layer.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        layers: Vec<PathBuf>,
        /// TOML with [mcmc], [priors] and [data] tables.
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(short, long, default_value = "m1", value_parser = parse_model)]
        model: ModelKind,
        /// Chain directory (or parent of per-layer chain directories).
        #[arg(short, long, default_value = "chain")]
        out: PathBuf,
        /// Overrides the sampler seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Closed-form strength moments over a parameter grid, as CSV.
    Moments {
        /// TOML grid definition.
        grid: PathBuf,
        /// Add Monte-Carlo oracle columns.
        #[arg(long)]
        oracle: bool,
        /// Output file; standard output when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Diagnostics, model comparison and predictive checks for fitted chains.
    Report {
        /// One or more chain directories.
        #[arg(required = true)]
        chains: Vec<PathBuf>,
        #[arg(short, long, default_value = "report")]
        out: PathBuf,
        /// Seed for replicated networks in predictive checks.
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    ModelKind::parse(s).ok_or_else(|| format!("unknown model '{s}' (expected m1, m2, m3, rg or rg-cov)"))
}

/// Stable tag printed as `error[tag]:`.
fn error_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<config::ConfigError>() {
            return e.kind();
        }
        if let Some(e) = cause.downcast_ref::<msls::MslsError>() {
            return e.kind();
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "error"
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate { config, out, seed } => simulate::run(config.as_deref(), &out, seed),
        Command::Fit {
            edges,
            leaning,
            exposure,
            layers,
            config,
            model,
            out,
            seed,
        } => {
            let inputs = if layers.is_empty() {
                vec![fit::LayerInput {
                    name: None,
                    edges: edges.expect("required by clap"),
                    leaning: leaning.expect("required by clap"),
                    exposure,
                }]
            } else {
                layers.iter().map(|d| fit::LayerInput::from_dir(d)).collect::<anyhow::Result<_>>()?
            };
            fit::run(&inputs, config.as_deref(), model, &out, seed)
        }
        Command::Moments { grid, oracle, out } => moments::run(&grid, oracle, out.as_deref()),
        Command::Report { chains, out, seed } => report::run(&chains, &out, seed),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e:#}", error_kind(&e));
            ExitCode::FAILURE
        }
    }
}
