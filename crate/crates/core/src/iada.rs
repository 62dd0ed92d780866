//! Inexact decomposition: block subproblems are solved only until a
//! certified bound on `dist(0, ∂φ_k)` drops below a summable threshold.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ada::{self, RunOutcome, StepMetrics, StopMode};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{IterateState, Problem, SolverParams};
use crate::solvers::{Accuracy, BlockSolution, BlockSolvers, ProxSubproblem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// `dist(0, ∂φ_k) <= ε_ν / (cK(ρ||E|| + ||E|| + 1))`.
    CriterionA,
    /// Criterion A scaled by `min(1, ||x_k^{ν+1} − x_k^ν||)`.
    CriterionB,
    Exact,
}

/// Inexactness schedule with `ε_ν = eps0 / ν^γ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InexactSchedule {
    pub kind: ScheduleKind,
    pub eps0: f64,
    pub gamma: f64,
    /// Spectral norm of the stacked coupling matrix.
    pub e_norm: f64,
}

impl InexactSchedule {
    pub fn new(kind: ScheduleKind, eps0: f64, gamma: f64, e_norm: f64) -> Result<Self> {
        let s = InexactSchedule {
            kind,
            eps0,
            gamma,
            e_norm,
        };
        s.validate()?;
        Ok(s)
    }

    /// Computes `||E||` from the problem.
    pub fn for_problem(kind: ScheduleKind, eps0: f64, gamma: f64, problem: &Problem) -> Result<Self> {
        Self::new(kind, eps0, gamma, problem.coupling_norm()?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps0 > 0.0) || !(self.gamma > 0.0) || !(self.e_norm > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "schedule needs eps0, gamma, ||E|| > 0; got {}, {}, {}",
                self.eps0, self.gamma, self.e_norm
            )));
        }
        Ok(())
    }

    /// `Σ ε_ν` is finite only for `γ > 1`; smaller values run but carry no
    /// convergence guarantee.
    pub fn theory_guaranteed(&self) -> bool {
        self.kind == ScheduleKind::Exact || self.gamma > 1.0
    }

    pub fn eps(&self, nu: usize) -> f64 {
        self.eps0 / (nu as f64).powf(self.gamma)
    }
}

/// Criterion A threshold at outer iteration `nu >= 1`.
pub fn criterion_a_threshold(nu: usize, schedule: &InexactSchedule, rho: f64, c: f64, k: usize) -> Result<f64> {
    if nu == 0 {
        return Err(Error::InvalidParameter("iteration index starts at 1".into()));
    }
    schedule.validate()?;
    if !(rho > 0.0) || !(c > 0.0) || k == 0 {
        return Err(Error::InvalidParameter(format!("rho={rho}, c={c}, K={k}")));
    }
    let e = schedule.e_norm;
    Ok(schedule.eps(nu) / (c * k as f64 * (rho * e + e + 1.0)))
}

/// Criterion B threshold: criterion A times `min(1, x_step_norm)`.
pub fn criterion_b_threshold(
    nu: usize,
    schedule: &InexactSchedule,
    rho: f64,
    c: f64,
    k: usize,
    x_step_norm: f64,
) -> Result<f64> {
    if !(x_step_norm >= 0.0) {
        return Err(Error::InvalidParameter(format!("step norm {x_step_norm}")));
    }
    Ok(criterion_a_threshold(nu, schedule, rho, c, k)? * x_step_norm.min(1.0))
}

/// Largest singular value by power iteration on `EᵀE` (relative tolerance
/// 1e-10, at most 1000 iterations). The zero matrix gives 0.
pub fn spectral_norm(e: &DMatrix<f64>) -> Result<f64> {
    if e.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    linalg::power_iteration(e.ncols(), |v| e * v, |u| e.tr_mul(u), 1e-10, 1000).map(|p| p.value)
}

/// Certified block solution.
pub type BlockSolveCertificate = BlockSolution;

fn accuracy_for(nu: usize, schedule: &InexactSchedule, params: &SolverParams, k: usize) -> Result<Accuracy> {
    Ok(match schedule.kind {
        ScheduleKind::Exact => Accuracy::Exact,
        ScheduleKind::CriterionA => Accuracy::Threshold(criterion_a_threshold(nu, schedule, params.rho, params.c, k)?),
        ScheduleKind::CriterionB => Accuracy::StepScaled {
            base: criterion_a_threshold(nu, schedule, params.rho, params.c, k)?,
        },
    })
}

/// Solves block `k` of outer iteration `nu` (producing `x^{nu}` from
/// `state = u^{nu−1}`) to the schedule's threshold.
pub fn inexact_block_solve(
    k: usize,
    nu: usize,
    state: &IterateState,
    problem: &Problem,
    params: &SolverParams,
    schedule: &InexactSchedule,
    solvers: &BlockSolvers,
) -> Result<BlockSolveCertificate> {
    if k >= problem.num_blocks() {
        return Err(Error::Dimension(format!("block {k} out of range")));
    }
    let accuracy = accuracy_for(nu, schedule, params, problem.num_blocks())?;
    let target = ada::ada_target(k, state, problem, params.rho);
    let sub = ProxSubproblem {
        alpha: params.rho / 2.0,
        target: &target,
        tau: 1.0 / params.c,
        anchor: &state.x[k],
    };
    solvers.get(k).solve(k, problem.block(k), &sub, accuracy)
}

/// Runs the inexact engine.
pub fn iada_run(
    problem: &Problem,
    params: &SolverParams,
    schedule: &InexactSchedule,
    solvers: &BlockSolvers,
    initial: IterateState,
    stop: StopMode,
) -> Result<RunOutcome> {
    iada_run_observed(problem, params, schedule, solvers, initial, stop, |_, _| {})
}

/// Runs the inexact engine, handing every new iterate to `observer`.
///
/// Each step records the threshold each block was held to; a certificate
/// above its threshold is an error.
pub fn iada_run_observed<O>(
    problem: &Problem,
    params: &SolverParams,
    schedule: &InexactSchedule,
    solvers: &BlockSolvers,
    initial: IterateState,
    stop: StopMode,
    observer: O,
) -> Result<RunOutcome>
where
    O: FnMut(&IterateState, &StepMetrics),
{
    schedule.validate()?;
    let k_blocks = problem.num_blocks();
    let exact = schedule.kind == ScheduleKind::Exact;
    ada::drive(problem, params, initial, stop, !exact, observer, |nu, state| {
        let accuracy = accuracy_for(nu, schedule, params, k_blocks)?;
        let (next, mut metrics, sols) = ada::sweep(nu, state, problem, params, solvers, &|_| accuracy)?;
        if !exact {
            metrics.per_block_threshold = sols
                .iter()
                .zip(&state.x)
                .map(|(s, prev)| accuracy.tolerance(&s.x, prev))
                .collect();
            for (k, (cert, thr)) in metrics.per_block_cert.iter().zip(&metrics.per_block_threshold).enumerate() {
                if cert > thr {
                    return Err(Error::InnerBudget {
                        block: k,
                        iters: sols[k].inner_iters,
                        bound: *cert,
                        threshold: *thr,
                    });
                }
            }
        }
        Ok((next, metrics))
    })
}

/// `Σ_ν Σ_k cert_{ν,k} · cK(ρ||E|| + ||E|| + 1)`, to be compared with `Σ_ν ε_ν`.
pub fn total_inexactness(steps: &[StepMetrics], schedule: &InexactSchedule, rho: f64, c: f64, k: usize) -> f64 {
    let e = schedule.e_norm;
    let scale = c * k as f64 * (rho * e + e + 1.0);
    steps.iter().flat_map(|s| s.per_block_cert.iter()).sum::<f64>() * scale
}

/// `Σ_{ν=1}^{n} ε_ν`.
pub fn eps_partial_sum(schedule: &InexactSchedule, n: usize) -> f64 {
    (1..=n).map(|nu| schedule.eps(nu)).sum()
}

/// `||x_k^{ν+1} − x_k^ν||` per block.
pub fn block_steps(prev: &[DVector<f64>], next: &[DVector<f64>]) -> Vec<f64> {
    prev.iter().zip(next).map(|(a, b)| (a - b).norm()).collect()
}
