//! Builds the configured instance, runs the solver and writes
//! `trace.csv`, `rate_report.json` and `summary.json` into the output
//! directory.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind, SolverKind, StopSetting};
use super::generators;
use super::libsvm;
use crate::ada::{self, RunOutcome, StopMode, Trace};
use crate::baselines::{self, Admm2Lasso};
use crate::diagnostics::{self, ErgodicAccumulator, RateReport};
use crate::error::Result;
use crate::iada::{self, InexactSchedule, ScheduleKind};
use crate::linalg::DataMatrix;
use crate::model::{IterateState, Problem, SolverParams};
use crate::solvers::{BlockSolvers, InnerChoice};

/// Accuracy of reference runs.
pub const REFERENCE_EPS: f64 = 1e-12;
/// Iteration cap of reference runs.
pub const REFERENCE_MAX_ITERS: usize = 50_000;
/// Relative slack of the Fejér check.
pub const FEJER_SLACK: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    NotConverged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub experiment: ExperimentKind,
    pub solver: SolverKind,
    pub status: RunStatus,
    pub iterations: usize,
    pub final_objective: Option<f64>,
    pub constraint_residual: Option<f64>,
    pub kkt_residual: Option<f64>,
    pub wall_time_s: f64,
}

/// Builds the problem described by `cfg`.
pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem> {
    match cfg.experiment {
        ExperimentKind::Lasso => {
            Ok(generators::gen_lasso(cfg.n.unwrap_or(200), cfg.d.unwrap_or(800), cfg.seed)?.problem)
        }
        ExperimentKind::Exchange => Ok(generators::gen_exchange(
            cfg.blocks.unwrap_or(5),
            cfg.n.unwrap_or(100),
            cfg.p.unwrap_or(80),
            cfg.seed,
        )?
        .problem),
        ExperimentKind::Logreg => {
            let (a, b) = match &cfg.libsvm {
                Some(path) => {
                    let ds = libsvm::load_libsvm(path)?;
                    (DataMatrix::Sparse(ds.a), ds.labels)
                }
                None => generators::gen_logreg(cfg.n.unwrap_or(2000), cfg.d.unwrap_or(50), cfg.seed)?,
            };
            let parts = generators::partition_rows(&a, &b, cfg.partitions.unwrap_or(4))?;
            generators::build_logreg_consensus(parts, cfg.lambda.unwrap_or(0.1))
        }
    }
}

/// What a finished run leaves behind.
#[derive(Clone, Debug)]
pub struct SolveResult {
    pub x: Vec<DVector<f64>>,
    pub multiplier: DVector<f64>,
    pub trace: Trace,
    pub converged: bool,
    /// Full final state for the decomposition engines.
    pub state: Option<IterateState>,
}

impl From<RunOutcome> for SolveResult {
    fn from(o: RunOutcome) -> Self {
        SolveResult {
            x: o.state.x.clone(),
            multiplier: o.state.zeta.clone(),
            trace: o.trace,
            converged: o.converged,
            state: Some(o.state),
        }
    }
}

/// Runs the exact engine, or the inexact one when a schedule is given.
pub fn run_engine<O>(
    problem: &Problem,
    params: &SolverParams,
    schedule: Option<&InexactSchedule>,
    solvers: &BlockSolvers,
    stop: StopMode,
    observer: O,
) -> Result<RunOutcome>
where
    O: FnMut(&IterateState, &crate::ada::StepMetrics),
{
    let init = IterateState::zeros(problem);
    match schedule {
        Some(s) => iada::iada_run_observed(problem, params, s, solvers, init, stop, observer),
        None => ada::run_observed(problem, params, solvers, init, stop, observer),
    }
}

/// Exact run to [`REFERENCE_EPS`] in x-change, used as the saddle-point
/// oracle for distance-based checks.
pub fn reference_state(problem: &Problem, rho: f64, c: f64, inner: InnerChoice) -> Result<IterateState> {
    let params = SolverParams::new(rho, c, REFERENCE_MAX_ITERS, REFERENCE_EPS)?;
    let solvers = BlockSolvers::for_ada(problem, &params, inner)?;
    Ok(ada::run(problem, &params, &solvers, IterateState::zeros(problem), StopMode::XChange)?.state)
}

/// Objective at consensus of an exact reference run.
pub fn reference_objective(problem: &Problem, rho: f64, c: f64, inner: InnerChoice) -> Result<f64> {
    let state = reference_state(problem, rho, c, inner)?;
    Ok(ada::consensus_metrics(&state.x, problem)?.shared_objective)
}

fn schedule_for(cfg: &ExperimentConfig, problem: &Problem) -> Result<InexactSchedule> {
    InexactSchedule::for_problem(cfg.schedule.kind, cfg.schedule.eps0, cfg.schedule.gamma, problem)
}

/// Runs the configured experiment and writes its artifacts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let started = Instant::now();
    let problem = build_problem(cfg)?;
    let (rho, c) = cfg.rho_c();
    let params = SolverParams::new(rho, c, cfg.max_iters, cfg.stop_eps)?;
    let inner = cfg.inner_choice();
    let stop = match cfg.stop_mode {
        StopSetting::XChange => StopMode::XChange,
        StopSetting::Feasibility => StopMode::Feasibility,
        StopSetting::MaxIters => StopMode::MaxIters,
        StopSetting::Consensus => StopMode::Consensus {
            reference_objective: reference_objective(&problem, rho, c, inner)?,
            gap_tol: cfg.gap_tol,
        },
    };

    let mut report;
    let result: SolveResult = match cfg.solver {
        SolverKind::Ada | SolverKind::Iada => {
            let schedule = match cfg.solver {
                SolverKind::Iada => Some(schedule_for(cfg, &problem)?),
                _ => None,
            };
            let solvers = BlockSolvers::for_ada(&problem, &params, inner)?;
            let reference = if cfg.reference && params.max_iters > 0 {
                Some(reference_state(&problem, rho, c, inner)?)
            } else {
                None
            };
            let u0 = IterateState::zeros(&problem);
            let mut dists = Vec::new();
            let mut ergodic = match &reference {
                Some(r) => {
                    dists.push(r.g_dist_sq(&u0, rho, c).sqrt());
                    Some(ErgodicAccumulator::new(&problem, r, &u0, rho, c)?)
                }
                None => None,
            };
            let mut observe_err = None;
            let outcome = run_engine(&problem, &params, schedule.as_ref(), &solvers, stop, |s, _| {
                if let (Some(r), Some(acc)) = (&reference, ergodic.as_mut()) {
                    dists.push(s.g_dist_sq(r, rho, c).sqrt());
                    if let Err(e) = acc.push(&s.x) {
                        observe_err.get_or_insert(e);
                    }
                }
            })?;
            if let Some(e) = observe_err {
                return Err(e);
            }
            let exact = schedule.is_none_or(|s| s.kind == ScheduleKind::Exact);
            report = RateReport::from_deltas(&outcome.trace.delta_g());
            if !exact {
                // the monotone property is a statement about exact steps only
                report.monotone_ok = false;
                report.first_violation = None;
            }
            if let Some(acc) = &ergodic {
                report.fejer_ok = Some(diagnostics::verify_fejer(&dists, FEJER_SLACK).ok);
                report.ergodic_max_violation = acc.max_violation().ok();
                let tail_window = 0.25;
                report.tail_ratio_theta = diagnostics::verify_linear_tail(&dists, tail_window).ok();
            }
            outcome.into()
        }
        SolverKind::Vsadmm => {
            let beta = cfg.baseline.beta;
            let solvers = baselines::vsadmm_solvers(&problem, beta, inner)?;
            let r = baselines::run_vsadmm(&problem, beta, &solvers, cfg.max_iters, cfg.stop_eps, stop)?;
            report = RateReport::from_deltas(&r.trace.delta_g());
            SolveResult {
                x: r.x,
                multiplier: r.multiplier,
                trace: r.trace,
                converged: r.converged,
                state: None,
            }
        }
        SolverKind::Proxjadmm => {
            let solvers = baselines::prox_jadmm_solvers(&problem, &cfg.baseline, inner)?;
            let r = baselines::run_prox_jadmm(&problem, &cfg.baseline, &solvers, cfg.max_iters, cfg.stop_eps, stop)?;
            report = RateReport::from_deltas(&r.trace.delta_g());
            SolveResult {
                x: r.x,
                multiplier: r.multiplier,
                trace: r.trace,
                converged: r.converged,
                state: None,
            }
        }
        SolverKind::Admm2 => {
            let lasso = Admm2Lasso::new(&problem, cfg.baseline.beta, cfg.baseline.admm_step)?;
            let r = baselines::run_admm2_lasso(&problem, &lasso, cfg.max_iters, cfg.stop_eps, stop)?;
            report = RateReport::from_deltas(&r.trace.delta_g());
            SolveResult {
                x: r.x,
                multiplier: r.multiplier,
                trace: r.trace,
                converged: r.converged,
                state: None,
            }
        }
    };
    if cfg.solver != SolverKind::Ada && cfg.solver != SolverKind::Iada {
        report.monotone_ok = false;
        report.first_violation = None;
    }

    let ran = !result.trace.is_empty();
    let summary = RunSummary {
        experiment: cfg.experiment,
        solver: cfg.solver,
        status: if result.converged {
            RunStatus::Converged
        } else {
            RunStatus::NotConverged
        },
        iterations: result.trace.len(),
        final_objective: ran.then(|| result.trace.steps.last().map(|s| s.objective)).flatten(),
        constraint_residual: ran
            .then(|| result.trace.steps.last().map(|s| s.constraint_residual_norm))
            .flatten(),
        kkt_residual: if ran {
            Some(diagnostics::kkt_residual(&result.x, &result.multiplier, &problem)?)
        } else {
            None
        },
        wall_time_s: started.elapsed().as_secs_f64(),
    };

    std::fs::create_dir_all(&cfg.out)?;
    result
        .trace
        .write_csv(&cfg.out.join("trace.csv"), problem.num_blocks())?;
    std::fs::write(cfg.out.join("rate_report.json"), report.to_json()?)?;
    std::fs::write(cfg.out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}
