//! The augmented decomposition engine.
//!
//! One sweep solves every block's proximal subproblem against the previous
//! iterate (in parallel), then updates `η`, `ζ̄`, `w` and `y`:
//!
//! ```text
//! x_k⁺ = argmin φ_k
//! η_k⁺ = y_k + (ρ/2)(E_k x_k⁺ − w_k [− q])
//! ζ̄⁺  = mean_k η_k⁺
//! w_k⁺ = w_k + (η_k⁺ − ζ̄⁺)/ρ
//! y_k⁺ = (η_k⁺ + ζ̄⁺)/2
//! ```
//!
//! The bracketed `− q` applies to the last block only.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{self, IterateState, Problem, SolverParams};
use crate::solvers::{Accuracy, BlockSolution, BlockSolvers, ProxSubproblem};

/// Largest re-projection correction of `w` tolerated before a step is
/// rejected as numerically broken.
pub const DRIFT_LIMIT: f64 = 1e-10;

/// Per-iteration diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    /// Index of the produced iterate (1 for the first step).
    pub iter: usize,
    pub objective: f64,
    pub constraint_residual_norm: f64,
    /// `||u^ν − u^{ν+1}||_G²` over `(w, x, η, ζ)`.
    pub delta_g_norm_sq: f64,
    /// `||x^ν − x^{ν+1}|| / max(1, ||x^ν||)`.
    pub x_rel_change: f64,
    /// `||E x^{ν+1} − q|| / max(1, ||q||)`.
    pub feas_rel: f64,
    /// Certified `dist(0, ∂φ_k)` per block.
    pub per_block_cert: Vec<f64>,
    /// Acceptance threshold per block; empty for exact solves.
    pub per_block_threshold: Vec<f64>,
    pub inner_iters: usize,
    /// Norm of the correction applied when re-projecting `w` onto `W`.
    pub w_drift: f64,
}

/// Recorded run. `inexact` adds the certificate columns to the CSV export.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub steps: Vec<StepMetrics>,
    pub inexact: bool,
}

impl Trace {
    pub fn new(inexact: bool) -> Self {
        Trace {
            steps: Vec::new(),
            inexact,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The sequence `a_ν = ||Δu^ν||_G²`.
    pub fn delta_g(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.delta_g_norm_sq).collect()
    }

    pub fn max_drift(&self) -> f64 {
        self.steps.iter().map(|s| s.w_drift).fold(0.0, f64::max)
    }

    /// CSV text with 17 significant digits per value.
    ///
    /// `num_blocks` fixes the certificate columns of an inexact trace even
    /// when it has no rows.
    pub fn to_csv(&self, num_blocks: usize) -> String {
        let mut out = String::from("iter,objective,residual,delta_g,x_rel,feas_rel");
        if self.inexact {
            for k in 1..=num_blocks {
                let _ = write!(out, ",cert_{k}");
            }
            out.push_str(",inner_iters_total");
        }
        out.push('\n');
        for s in &self.steps {
            let _ = write!(
                out,
                "{},{},{},{},{},{}",
                s.iter,
                fmt17(s.objective),
                fmt17(s.constraint_residual_norm),
                fmt17(s.delta_g_norm_sq),
                fmt17(s.x_rel_change),
                fmt17(s.feas_rel)
            );
            if self.inexact {
                for k in 0..num_blocks {
                    let v = s.per_block_cert.get(k).copied().unwrap_or(0.0);
                    let _ = write!(out, ",{}", fmt17(v));
                }
                let _ = write!(out, ",{}", s.inner_iters);
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path, num_blocks: usize) -> io::Result<()> {
        std::fs::write(path, self.to_csv(num_blocks))
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Stopping rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopMode {
    /// Relative change of `x`.
    XChange,
    /// Relative constraint violation.
    Feasibility,
    /// Run all iterations.
    MaxIters,
    /// Consensus layout (blocks `x_i`, shared last block `z`, residual
    /// chunks `x_i − z`): `Σ||x_i − z|| / (N||z||) <= eps` and relative
    /// objective gap to `reference_objective` at most `gap_tol`, where the
    /// objective is evaluated at `x_i = z` for every `i`.
    Consensus { reference_objective: f64, gap_tol: f64 },
}

/// Quantities the consensus test needs beyond [`StepMetrics`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConsensusMetrics {
    pub ratio: f64,
    pub shared_objective: f64,
}

/// Checks the stopping rule on a completed step.
pub fn check_stop(metrics: &StepMetrics, eps: f64, mode: StopMode) -> bool {
    match mode {
        StopMode::XChange => metrics.x_rel_change <= eps,
        StopMode::Feasibility => metrics.feas_rel <= eps,
        StopMode::MaxIters | StopMode::Consensus { .. } => false,
    }
}

/// Consensus test; see [`StopMode::Consensus`].
pub fn check_consensus(c: &ConsensusMetrics, eps: f64, reference_objective: f64, gap_tol: f64) -> bool {
    let gap = (c.shared_objective - reference_objective).abs() / reference_objective.abs().max(f64::MIN_POSITIVE);
    c.ratio <= eps && gap <= gap_tol
}

/// `Σ_i ||x_i − z|| / (N ||z||)` and the objective at `x_i = z`.
pub fn consensus_metrics(x: &[DVector<f64>], problem: &Problem) -> Result<ConsensusMetrics> {
    let k = problem.num_blocks();
    let z = &x[k - 1];
    let d = z.len();
    let n = k - 1;
    if problem.m() != n * d {
        return Err(Error::InvalidProblem(format!(
            "consensus layout needs m = (K-1)·dim(z) = {}, got {}",
            n * d,
            problem.m()
        )));
    }
    let r = model::constraint_residual(x, problem)?;
    let sum: f64 = (0..n).map(|i| r.rows(i * d, d).norm()).sum();
    let ratio = sum / (n as f64 * z.norm().max(f64::MIN_POSITIVE));
    if x.iter().any(|xi| xi.len() != d) {
        return Err(Error::InvalidProblem("consensus layout needs equal block dimensions".into()));
    }
    let shared = vec![z.clone(); k];
    Ok(ConsensusMetrics {
        ratio,
        shared_objective: model::objective(&shared, problem)?,
    })
}

/// `φ_k(x_k)` at the given state.
pub fn phi_value(
    k: usize,
    xk: &DVector<f64>,
    state: &IterateState,
    problem: &Problem,
    params: &SolverParams,
) -> Result<f64> {
    if k >= problem.num_blocks() {
        return Err(Error::Dimension(format!(
            "block {k} out of range for {} blocks",
            problem.num_blocks()
        )));
    }
    let block = problem.block(k);
    if xk.len() != block.dim {
        return Err(Error::Dimension(format!("block {k} has dimension {}", block.dim)));
    }
    let mut inner = block.coupling.apply(xk) - &state.w[k] + &state.y[k] * (2.0 / params.rho);
    if problem.is_last(k) {
        inner -= problem.q();
    }
    Ok(block.objective.value(xk)
        + params.rho / 4.0 * inner.norm_squared()
        + (xk - &state.x[k]).norm_squared() / (2.0 * params.c))
}

/// `target_k = w_k − (2/ρ) y_k (+ q for the last block)`.
pub(crate) fn ada_target(k: usize, state: &IterateState, problem: &Problem, rho: f64) -> DVector<f64> {
    let mut t = &state.w[k] - &state.y[k] * (2.0 / rho);
    if problem.is_last(k) {
        t += problem.q();
    }
    t
}

/// One sweep with per-block accuracies. Shared by the exact and inexact
/// engines so that an exact schedule reproduces the exact engine bit for bit.
pub(crate) fn sweep(
    iter: usize,
    state: &IterateState,
    problem: &Problem,
    params: &SolverParams,
    solvers: &BlockSolvers,
    accuracy: &(dyn Fn(usize) -> Accuracy + Sync),
) -> Result<(IterateState, StepMetrics, Vec<BlockSolution>)> {
    let k_blocks = problem.num_blocks();
    if solvers.len() != k_blocks {
        return Err(Error::Dimension(format!(
            "{} solvers for {} blocks",
            solvers.len(),
            k_blocks
        )));
    }
    let rho = params.rho;
    let tau = 1.0 / params.c;
    let solutions: Vec<Result<BlockSolution>> = (0..k_blocks)
        .into_par_iter()
        .map(|k| {
            let target = ada_target(k, state, problem, rho);
            let sub = ProxSubproblem {
                alpha: rho / 2.0,
                target: &target,
                tau,
                anchor: &state.x[k],
            };
            solvers.get(k).solve(k, problem.block(k), &sub, accuracy(k))
        })
        .collect();
    let solutions = solutions.into_iter().collect::<Result<Vec<_>>>()?;

    let mut eta = Vec::with_capacity(k_blocks);
    for (k, sol) in solutions.iter().enumerate() {
        let mut bracket = problem.block(k).coupling.apply(&sol.x) - &state.w[k];
        if problem.is_last(k) {
            bracket -= problem.q();
        }
        eta.push(&state.y[k] + bracket * (rho / 2.0));
    }
    let zeta = linalg::mean_of(&eta);
    let mut w: Vec<DVector<f64>> = state
        .w
        .iter()
        .zip(&eta)
        .map(|(wk, ek)| wk + (ek - &zeta) / rho)
        .collect();
    let w_mean = linalg::mean_of(&w);
    let w_drift = w_mean.norm() * (k_blocks as f64).sqrt();
    if w_drift > DRIFT_LIMIT * (1.0 + linalg::stacked_norm_sq(&w).sqrt()) {
        return Err(Error::InvalidProblem(format!(
            "w left the zero-sum subspace by {w_drift:e} at iteration {iter}"
        )));
    }
    for wk in &mut w {
        *wk -= &w_mean;
    }
    let y = eta.iter().map(|ek| (ek + &zeta) * 0.5).collect();
    let x: Vec<DVector<f64>> = solutions.iter().map(|s| s.x.clone()).collect();
    let next = IterateState { w, x, eta, zeta, y };

    let residual = model::constraint_residual(&next.x, problem)?;
    let x_prev_norm = state.x_norm();
    let metrics = StepMetrics {
        iter,
        objective: model::objective(&next.x, problem)?,
        constraint_residual_norm: residual.norm(),
        delta_g_norm_sq: state.g_dist_sq(&next, rho, params.c),
        x_rel_change: linalg::stacked_diff_norm_sq(&state.x, &next.x).sqrt() / x_prev_norm.max(1.0),
        feas_rel: residual.norm() / problem.q().norm().max(1.0),
        per_block_cert: solutions.iter().map(|s| s.subgrad_bound).collect(),
        per_block_threshold: Vec::new(),
        inner_iters: solutions.iter().map(|s| s.inner_iters).sum(),
        w_drift,
    };
    Ok((next, metrics, solutions))
}

/// One exact step from `state`; the metrics are labelled iteration 1.
pub fn ada_step(
    state: &IterateState,
    problem: &Problem,
    params: &SolverParams,
    solvers: &BlockSolvers,
) -> Result<(IterateState, StepMetrics)> {
    params.validate()?;
    let (next, metrics, _) = sweep(1, state, problem, params, solvers, &|_| Accuracy::Exact)?;
    Ok((next, metrics))
}

/// Result of a run. `converged` is false when the iteration budget ran out.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub state: IterateState,
    pub trace: Trace,
    pub converged: bool,
}

/// Runs the exact engine.
pub fn run(
    problem: &Problem,
    params: &SolverParams,
    solvers: &BlockSolvers,
    initial: IterateState,
    stop: StopMode,
) -> Result<RunOutcome> {
    run_observed(problem, params, solvers, initial, stop, |_, _| {})
}

/// Runs the exact engine, handing every new iterate to `observer`.
pub fn run_observed<O>(
    problem: &Problem,
    params: &SolverParams,
    solvers: &BlockSolvers,
    initial: IterateState,
    stop: StopMode,
    observer: O,
) -> Result<RunOutcome>
where
    O: FnMut(&IterateState, &StepMetrics),
{
    drive(problem, params, initial, stop, false, observer, |iter, state| {
        sweep(iter, state, problem, params, solvers, &|_| Accuracy::Exact).map(|(s, m, _)| (s, m))
    })
}

/// Outer loop shared by the exact and inexact engines.
pub(crate) fn drive<O, S>(
    problem: &Problem,
    params: &SolverParams,
    initial: IterateState,
    stop: StopMode,
    inexact: bool,
    mut observer: O,
    mut step: S,
) -> Result<RunOutcome>
where
    O: FnMut(&IterateState, &StepMetrics),
    S: FnMut(usize, &IterateState) -> Result<(IterateState, StepMetrics)>,
{
    params.validate()?;
    problem.check_x(&initial.x)?;
    let mut state = initial;
    let mut trace = Trace::new(inexact);
    for iter in 1..=params.max_iters {
        let (next, metrics) = step(iter, &state)?;
        observer(&next, &metrics);
        let done = match stop {
            StopMode::Consensus {
                reference_objective,
                gap_tol,
            } => {
                let cm = consensus_metrics(&next.x, problem)?;
                check_consensus(&cm, params.stop_eps, reference_objective, gap_tol)
            }
            mode => check_stop(&metrics, params.stop_eps, mode),
        };
        trace.steps.push(metrics);
        state = next;
        if done {
            return Ok(RunOutcome {
                state,
                trace,
                converged: true,
            });
        }
    }
    Ok(RunOutcome {
        state,
        trace,
        converged: false,
    })
}

/// Mean of the first `n` iterates `x¹ … x^N` of `xs` (index 0 holds `x¹`).
pub fn ergodic_average(xs: &[Vec<DVector<f64>>], n: usize) -> Result<Vec<DVector<f64>>> {
    if n == 0 {
        return Err(Error::InvalidParameter("ergodic average needs N >= 1".into()));
    }
    if n > xs.len() {
        return Err(Error::TraceTooShort {
            needed: n,
            got: xs.len(),
        });
    }
    let mut acc: Vec<DVector<f64>> = xs[0].iter().map(|v| DVector::zeros(v.len())).collect();
    for it in &xs[..n] {
        for (a, v) in acc.iter_mut().zip(it) {
            *a += v;
        }
    }
    Ok(acc.into_iter().map(|a| a / n as f64).collect())
}
