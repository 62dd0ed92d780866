//! `augdec solve` runs one experiment and writes `trace.csv`,
//! `rate_report.json` and `summary.json` into the output directory.
//!
//! Exit status: 0 converged, 2 stopped without converging, 1 error.

use std::path::PathBuf;
use std::process::ExitCode;

use augdec::experiments::config::{ExperimentConfig, ExperimentKind};
use augdec::experiments::runner::{self, RunStatus};
use augdec::{Error, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

#[derive(Parser, Debug)]
#[command(name = "augdec", version, about = "Augmented decomposition experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment. Flags override values from `--config`.
    Solve(SolveArgs),
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// lasso, exchange or logreg.
    #[arg(long)]
    experiment: Option<String>,
    /// ada, iada, vsadmm, proxjadmm or admm2.
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    /// Decay exponent of the inexactness schedule.
    #[arg(long)]
    gamma: Option<f64>,
    /// Scale of the inexactness schedule.
    #[arg(long)]
    eps0: Option<f64>,
    /// criterion_a, criterion_b or exact.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    stop_eps: Option<f64>,
    /// x_change, feasibility, max_iters or consensus.
    #[arg(long)]
    stop_mode: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    /// Number of blocks (exchange).
    #[arg(long)]
    blocks: Option<usize>,
    /// Rows per block (exchange).
    #[arg(long)]
    p: Option<usize>,
    /// Row partitions (logreg).
    #[arg(long)]
    partitions: Option<usize>,
    /// LIBSVM file for logreg.
    #[arg(long)]
    libsvm: Option<PathBuf>,
    /// Also compute Fejér, ergodic and tail-rate diagnostics against a
    /// high-accuracy reference run.
    #[arg(long)]
    reference: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_name<T: DeserializeOwned>(what: &str, value: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| Error::Config(format!("unknown {what} {value:?}")))
}

fn build_config(args: SolveArgs) -> Result<ExperimentConfig> {
    let mut cfg = match (&args.config, &args.experiment) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => ExperimentConfig::new(parse_name::<ExperimentKind>("experiment", name)?),
        (None, None) => return Err(Error::Config("either --config or --experiment is required".into())),
    };
    if let Some(name) = &args.experiment {
        cfg.experiment = parse_name("experiment", name)?;
    }
    if let Some(name) = &args.solver {
        cfg.solver = parse_name("solver", name)?;
    }
    if let Some(name) = &args.schedule {
        cfg.schedule.kind = parse_name("schedule", name)?;
    }
    if let Some(name) = &args.stop_mode {
        cfg.stop_mode = parse_name("stop mode", name)?;
    }
    cfg.rho = args.rho.or(cfg.rho);
    cfg.c = args.c.or(cfg.c);
    cfg.schedule.gamma = args.gamma.unwrap_or(cfg.schedule.gamma);
    cfg.schedule.eps0 = args.eps0.unwrap_or(cfg.schedule.eps0);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.max_iters = args.max_iters.unwrap_or(cfg.max_iters);
    cfg.stop_eps = args.stop_eps.unwrap_or(cfg.stop_eps);
    cfg.n = args.n.or(cfg.n);
    cfg.d = args.d.or(cfg.d);
    cfg.blocks = args.blocks.or(cfg.blocks);
    cfg.p = args.p.or(cfg.p);
    cfg.partitions = args.partitions.or(cfg.partitions);
    cfg.libsvm = args.libsvm.or(cfg.libsvm);
    cfg.reference |= args.reference;
    cfg.out = args.out.unwrap_or(cfg.out);
    cfg.validate()?;
    Ok(cfg)
}

fn solve(args: SolveArgs) -> Result<RunStatus> {
    let cfg = build_config(args)?;
    let summary = runner::run_experiment(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(summary.status)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::Solve(args) => match solve(args) {
            Ok(RunStatus::Converged) => ExitCode::SUCCESS,
            Ok(RunStatus::NotConverged) => ExitCode::from(2),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
    }
}
