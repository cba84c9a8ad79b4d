//! `rotsync`: information weights, Cramér–Rao bounds, Monte Carlo
//! simulations, embeddings and samples from the command line.

mod commands;
mod graphfile;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Core(#[from] rotsync::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 0 ok, 2 parse, 3 quadrature, 4 ill-posed, 5 bad dimension, 6 sampler.
    fn exit_code(&self) -> u8 {
        use rotsync::Error as E;
        match self {
            CliError::Parse(_) => 2,
            CliError::Io(_) | CliError::Csv(_) => 1,
            CliError::Core(e) => match e {
                E::Quadrature(_) => 3,
                E::IllPosed(_) => 4,
                E::InvalidDimension(_)
                | E::DimensionMismatch(_)
                | E::UnsupportedDimension(_)
                | E::EmbeddingDimension { .. }
                | E::TooLarge(..) => 5,
                E::SamplerStuck(_) => 6,
                E::InvalidModel(_)
                | E::InvalidGraph(_)
                | E::InvalidNode(_)
                | E::InvalidArgument(_)
                | E::NotARotation(_) => 2,
                _ => 1,
            },
        }
    }
}

#[derive(Parser)]
#[command(name = "rotsync", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
pub enum Rule {
    #[default]
    Simpson,
    GaussLegendre,
}

#[derive(Args, Clone, Debug)]
pub struct QuadOpts {
    /// Absolute quadrature tolerance.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = Rule::Simpson)]
    pub rule: Rule,
}

#[derive(Args, Clone, Debug)]
pub struct OutOpts {
    /// Output file; standard output when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Args, Clone, Copy, Debug)]
#[group(multiple = false)]
pub struct ModeOpts {
    /// Pin the gauge with the graph's anchors.
    #[arg(long)]
    pub anchored: bool,
    /// Ignore anchors and work in the quotient by global rotations.
    #[arg(long)]
    pub anchor_free: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Estimator {
    Eig,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum RandomKind {
    Complete,
    ErdosRenyi,
    Clustered,
}

#[derive(Args, Clone, Debug)]
pub struct RandomOpts {
    /// Draw a random graph instead of reading a file.
    #[arg(long, value_enum)]
    pub random: Option<RandomKind>,
    #[arg(long, default_value_t = 20)]
    pub nodes: usize,
    /// Rotation dimension of the random graph.
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    /// Edge noise as JSON, e.g. '{"kind":"langevin","kappa":4}'.
    #[arg(long, default_value = r#"{"kind":"langevin","kappa":4.0}"#)]
    pub noise: String,
    /// Edge probability (erdos-renyi).
    #[arg(long, default_value_t = 0.5)]
    pub q: f64,
    /// Cluster count, in- and cross-cluster edge probabilities (clustered).
    #[arg(long, default_value_t = 2)]
    pub clusters: usize,
    #[arg(long, default_value_t = 0.8)]
    pub p_in: f64,
    #[arg(long, default_value_t = 0.05)]
    pub p_out: f64,
    /// Comma-separated 1-based anchors for the random graph.
    #[arg(long, value_delimiter = ',')]
    pub anchors: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub graph_seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Per-edge information weights.
    Weights {
        graph: PathBuf,
        #[command(flatten)]
        quad: QuadOpts,
        #[command(flatten)]
        out: OutOpts,
    },
    /// Cramér–Rao bound report (JSON).
    Crb {
        graph: PathBuf,
        #[command(flatten)]
        mode: ModeOpts,
        /// Curvature-corrected per-node bounds (n = 2, 3).
        #[arg(long)]
        corrected: bool,
        /// Node pairs such as 1:2,3:4 (anchor-free mode).
        #[arg(long, value_delimiter = ',')]
        pairs: Vec<String>,
        #[command(flatten)]
        quad: QuadOpts,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo comparison of the spectral estimator with the bound.
    Simulate {
        graph: Option<PathBuf>,
        #[command(flatten)]
        random: RandomOpts,
        #[command(flatten)]
        mode: ModeOpts,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Estimator::Eig)]
        estimator: Estimator,
        #[arg(long)]
        corrected: bool,
        #[arg(long, value_delimiter = ',')]
        pairs: Vec<String>,
        /// Exact measurements (every edge noise replaced by the identity).
        #[arg(long)]
        noiseless: bool,
        /// Sweep kappa over every edge.
        #[arg(long, value_delimiter = ',', conflicts_with = "p_grid")]
        kappa_grid: Vec<f64>,
        /// Sweep the inlier probability over every (outlier-model) edge.
        #[arg(long, value_delimiter = ',')]
        p_grid: Vec<f64>,
        /// Run trials on one thread.
        #[arg(long)]
        sequential: bool,
        #[command(flatten)]
        quad: QuadOpts,
        #[command(flatten)]
        out: OutOpts,
    },
    /// Commute-time embedding (CSV or JSON).
    Embed {
        graph: PathBuf,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long)]
        anchored: bool,
        #[command(flatten)]
        quad: QuadOpts,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Draw rotations from a noise model.
    Sample {
        /// Noise model as JSON, e.g. '{"kind":"langevin","kappa":2}'.
        #[arg(long)]
        model: String,
        #[arg(long, short = 'n', default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Rotations file (JSON list); the summary goes to standard output.
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[command(flatten)]
        quad: QuadOpts,
    },
    /// Minimum inlier probability for a target accuracy on a random graph.
    Outliers {
        #[arg(long, short = 'n', default_value_t = 3)]
        n: usize,
        #[arg(long)]
        kappa: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        nodes: usize,
        /// Edge density of the Erdős–Rényi graph.
        #[arg(long)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Skip the eigendecomposition and report only the closed form.
        #[arg(long)]
        formula_only: bool,
        #[command(flatten)]
        quad: QuadOpts,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("ROTSYNC_THREADS") else {
        return Ok(());
    };
    let threads: usize = value.parse().ok().filter(|&t| t > 0).ok_or_else(|| {
        CliError::Parse(format!(
            "ROTSYNC_THREADS must be a positive integer, got {value:?}"
        ))
    })?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Parse(format!("cannot size thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Weights { graph, quad, out } => commands::weights(&graph, &quad, &out),
        Command::Crb {
            graph,
            mode,
            corrected,
            pairs,
            quad,
            out,
        } => commands::crb(&graph, mode, corrected, &pairs, &quad, out.as_deref()),
        Command::Simulate {
            graph,
            random,
            mode,
            trials,
            seed,
            estimator: Estimator::Eig,
            corrected,
            pairs,
            noiseless,
            kappa_grid,
            p_grid,
            sequential,
            quad,
            out,
        } => commands::simulate(commands::SimulateArgs {
            graph,
            random,
            mode,
            trials,
            seed,
            corrected,
            pairs,
            noiseless,
            kappa_grid,
            p_grid,
            sequential,
            quad,
            out,
        }),
        Command::Embed {
            graph,
            dim,
            anchored,
            quad,
            out,
            format,
        } => commands::embed(&graph, dim, anchored, &quad, out.as_deref(), format),
        Command::Sample {
            model,
            n,
            count,
            seed,
            out,
            quad,
        } => commands::sample(&model, n, count, seed, out.as_deref(), &quad),
        Command::Outliers {
            n,
            kappa,
            eps,
            nodes,
            density,
            seed,
            formula_only,
            quad,
        } => commands::outliers(n, kappa, eps, nodes, density, seed, formula_only, &quad),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rotsync: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
