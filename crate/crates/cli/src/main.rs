//! `hypermerw` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 infeasible or unsolved
//! constraints, 3 I/O error.

mod commands;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Serialize)]
#[command(name = "hypermerw", version, about = "Maximum-entropy random walks on directed hypergraphs")]
struct Cli {
    /// Seed for every randomized option.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Command {
    /// Infer a broadcasting kernel from a one-tail hypergraph.
    InferBroadcast(InferBroadcast),
    /// Infer a merging kernel from a one-head hypergraph.
    InferMerge(InferMerge),
    /// Iterate node dynamics and write the L1 mixing curve.
    Simulate(Simulate),
    /// Primitivity and spectral gap (broadcast) or Dobrushin contraction (merge).
    Ergodicity(Ergodicity),
    /// MovieLens next-item evaluation of MERW against baselines.
    EvalNextitem(EvalNextitem),
    /// Report structural problems of a hypergraph.
    ValidateGraph(ValidateGraph),
}

#[derive(Args, Serialize)]
struct Solver {
    /// Hypergraph JSON (1-based node indices).
    #[arg(long)]
    graph: PathBuf,
    /// Stationary distribution: `uniform`, an inline list, or a file.
    #[arg(long)]
    p: String,
    /// Layer weights as K=WEIGHT, comma separated or repeated; equal weights
    /// over the edge sizes present when omitted.
    #[arg(long)]
    lambda: Vec<String>,
    /// Residual tolerance.
    #[arg(long, default_value_t = 1e-10)]
    eps: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
    #[arg(long, value_enum, default_value_t = Degree::Global)]
    degree_mode: Degree,
    /// Output kernel JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct InferBroadcast {
    #[command(flatten)]
    #[serde(flatten)]
    solver: Solver,
    /// One-step transport source q (rows weighted by q, q pushed to p).
    #[arg(long)]
    source: Option<String>,
}

#[derive(Args, Serialize)]
struct InferMerge {
    #[command(flatten)]
    #[serde(flatten)]
    solver: Solver,
    #[arg(long, value_enum, default_value_t = Target::Exact)]
    target: Target,
    /// Keep the last iterate when the iteration cap is reached.
    #[arg(long)]
    best_effort: bool,
}

#[derive(Args, Serialize)]
struct Simulate {
    /// Kernel JSON; repeat to mix several broadcasting kernels.
    #[arg(long, required = true)]
    kernel: Vec<PathBuf>,
    /// Mixture weights, one value per kernel, comma separated; repeat for a
    /// grid. Equal weights when omitted.
    #[arg(long)]
    weights: Vec<String>,
    /// Number of steps.
    #[arg(long = "T", default_value_t = 100)]
    steps: usize,
    /// Start: `delta:J`, `uniform`, `random`, an inline list, or a file.
    #[arg(long, default_value = "uniform")]
    p0: String,
    /// Merge kernels: divide each iterate by its sum.
    #[arg(long)]
    renormalize: bool,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct Ergodicity {
    #[arg(long)]
    kernel: PathBuf,
    /// Dobrushin coefficient evaluation for merge kernels.
    #[arg(long, value_enum, default_value_t = Delta::Auto)]
    delta: Delta,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct EvalNextitem {
    /// MovieLens `u.data` style file: user, item, rating, timestamp.
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long, default_value_t = 500)]
    topn: usize,
    /// Fraction of the time-ordered events used for training.
    #[arg(long, default_value_t = 0.8)]
    split: f64,
    /// List lengths L for hit@L.
    #[arg(long = "Ls", default_value = "10,20,30,40,100")]
    limits: String,
    #[arg(long, value_enum, default_value_t = Reference::Counts)]
    reference: Reference,
    /// Successor weighting of the lazy random-walk baseline.
    #[arg(long, value_enum, default_value_t = Reference::Counts)]
    lazy: Reference,
    #[arg(long, default_value_t = 1e-10)]
    eps: f64,
    #[arg(long, default_value_t = 20_000)]
    max_iter: usize,
    /// Output CSV; the table always goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct ValidateGraph {
    #[arg(long)]
    graph: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Degree {
    Global,
    PerLayer,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Target {
    Exact,
    MassAdjusted,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Delta {
    Auto,
    Exact,
    Bound,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Reference {
    Counts,
    Uniform,
}

/// A failed run, carrying its exit code class.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Infeasible(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Infeasible(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Infeasible(m) | Failure::Io(m) => m,
        }
    }
}

impl From<hypermerw::Error> for Failure {
    fn from(e: hypermerw::Error) -> Self {
        use hypermerw::Error as E;
        match e {
            E::Infeasible(_) | E::NotConverged { .. } => Failure::Infeasible(e.to_string()),
            E::Io(_) => Failure::Io(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("HYPERMERW_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| Failure::Usage(format!("HYPERMERW_THREADS must be a count, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Usage(format!("thread pool: {e}")))
}

fn run(cli: &Cli) -> Result<(), Failure> {
    configure_threads()?;
    let config = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cli.seed,
        "args": &cli.command,
    });
    match &cli.command {
        Command::InferBroadcast(a) => commands::infer_broadcast(a, &config),
        Command::InferMerge(a) => commands::infer_merge(a, &config),
        Command::Simulate(a) => commands::simulate(a, cli.seed, &config),
        Command::Ergodicity(a) => commands::ergodicity(a, &config),
        Command::EvalNextitem(a) => commands::eval_nextitem(a, &config),
        Command::ValidateGraph(a) => commands::validate_graph(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
