//! Comparison methods: variable-splitting ADMM, proximal Jacobian ADMM, and
//! classic two-block ADMM for the lasso.
//!
//! Their traces use the same schema as the decomposition engine. The
//! `delta_g` column holds the squared Euclidean change of the primal blocks
//! and multipliers, since these methods have no G-norm of their own, and
//! `x_rel` is the relative change of that same combined vector.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ada::{self, StepMetrics, StopMode, Trace};
use crate::error::{Error, Result};
use crate::linalg::{self, Coupling};
use crate::model::{self, FeasibleSet, Nonsmooth, Problem, SmoothKind};
use crate::solvers::{shrink, Accuracy, BlockSolvers, CachedQuadSolver, InnerChoice, ProxSubproblem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineParams {
    pub beta: f64,
    /// Dual damping of the proximal Jacobian method.
    pub gamma_damp: f64,
    /// `τ_k` with `P_k = τ_k I`; empty means the default rule.
    pub prox_weights: Vec<f64>,
    /// Dual step length of two-block ADMM.
    pub admm_step: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams {
            beta: 1.0,
            gamma_damp: 1.0,
            prox_weights: Vec::new(),
            admm_step: 1.618,
        }
    }
}

impl BaselineParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.gamma_damp > 0.0 && self.gamma_damp < 2.0) {
            return Err(Error::InvalidParameter(format!(
                "damping must lie in (0, 2), got {}",
                self.gamma_damp
            )));
        }
        if self.prox_weights.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::InvalidParameter("proximal weights must be positive".into()));
        }
        Ok(())
    }

    /// `τ_k = β(K/(2 − γ) − 1)||E_k||² + 0.1`, or the configured weights.
    pub fn jadmm_weights(&self, problem: &Problem) -> Result<Vec<f64>> {
        self.validate()?;
        let k = problem.num_blocks();
        if !self.prox_weights.is_empty() {
            if self.prox_weights.len() != k {
                return Err(Error::Dimension(format!("{} proximal weights for {k} blocks", self.prox_weights.len())));
            }
            return Ok(self.prox_weights.clone());
        }
        let factor = self.beta * (k as f64 / (2.0 - self.gamma_damp) - 1.0);
        problem
            .blocks()
            .iter()
            .map(|b| Ok(factor * b.coupling.norm()?.powi(2) + 0.1))
            .collect()
    }
}

/// Outcome of a baseline run.
#[derive(Clone, Debug)]
pub struct BaselineRun<S> {
    pub state: S,
    /// Primal blocks in the problem's block order.
    pub x: Vec<DVector<f64>>,
    /// Multiplier `y` with `0 ∈ ∂f(x) + Eᵀy` at a solution.
    pub multiplier: DVector<f64>,
    pub trace: Trace,
    pub converged: bool,
}

/// Common view used for metrics and the stopping test.
trait View {
    fn blocks(&self) -> Vec<DVector<f64>>;
    fn duals(&self) -> Vec<DVector<f64>>;
    fn multiplier(&self) -> DVector<f64>;
}

fn baseline_loop<S, F>(
    problem: &Problem,
    max_iters: usize,
    stop_eps: f64,
    stop: StopMode,
    initial: S,
    mut step: F,
) -> Result<BaselineRun<S>>
where
    S: View,
    F: FnMut(&S) -> Result<S>,
{
    let mut state = initial;
    let mut trace = Trace::new(false);
    let mut converged = false;
    for iter in 1..=max_iters {
        let next = step(&state)?;
        let (x_old, x_new) = (state.blocks(), next.blocks());
        let (y_old, y_new) = (state.duals(), next.duals());
        let residual = model::constraint_residual(&x_new, problem)?;
        let delta = linalg::stacked_diff_norm_sq(&x_old, &x_new) + linalg::stacked_diff_norm_sq(&y_old, &y_new);
        // x alone can stall for a step while the multipliers still move
        let size = linalg::stacked_norm_sq(&x_old) + linalg::stacked_norm_sq(&y_old);
        let metrics = StepMetrics {
            iter,
            objective: model::objective(&x_new, problem)?,
            constraint_residual_norm: residual.norm(),
            delta_g_norm_sq: delta,
            x_rel_change: delta.sqrt() / size.sqrt().max(1.0),
            feas_rel: residual.norm() / problem.q().norm().max(1.0),
            per_block_cert: vec![0.0; x_new.len()],
            per_block_threshold: Vec::new(),
            inner_iters: 0,
            w_drift: 0.0,
        };
        let done = match stop {
            StopMode::Consensus {
                reference_objective,
                gap_tol,
            } => ada::check_consensus(
                &ada::consensus_metrics(&x_new, problem)?,
                stop_eps,
                reference_objective,
                gap_tol,
            ),
            mode => ada::check_stop(&metrics, stop_eps, mode),
        };
        trace.steps.push(metrics);
        state = next;
        if done {
            converged = true;
            break;
        }
    }
    Ok(BaselineRun {
        x: state.blocks(),
        multiplier: state.multiplier(),
        state,
        trace,
        converged,
    })
}

// ---------------------------------------------------------------------------
// Variable-splitting ADMM

#[derive(Clone, Debug, PartialEq)]
pub struct VsadmmState {
    pub w: Vec<DVector<f64>>,
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
}

impl VsadmmState {
    pub fn zeros(problem: &Problem) -> Self {
        let k = problem.num_blocks();
        VsadmmState {
            w: vec![DVector::zeros(problem.m()); k],
            x: problem.dims().into_iter().map(DVector::zeros).collect(),
            y: vec![DVector::zeros(problem.m()); k],
        }
    }
}

impl View for VsadmmState {
    fn blocks(&self) -> Vec<DVector<f64>> {
        self.x.clone()
    }
    fn duals(&self) -> Vec<DVector<f64>> {
        self.y.clone()
    }
    fn multiplier(&self) -> DVector<f64> {
        linalg::mean_of(&self.y)
    }
}

/// Block solvers for `f_k + (β/2)||E_k x − t||²` (no proximal term).
pub fn vsadmm_solvers(problem: &Problem, beta: f64, inner: InnerChoice) -> Result<BlockSolvers> {
    BlockSolvers::new(problem, beta, &vec![0.0; problem.num_blocks()], inner)
}

/// `v_k = E_k x_k + y_k/β (− q for the last block)`.
pub fn vsadmm_w_update(v: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    model::project_onto_w(v)
}

pub fn vsadmm_step(state: &VsadmmState, problem: &Problem, beta: f64, solvers: &BlockSolvers) -> Result<VsadmmState> {
    let k_blocks = problem.num_blocks();
    let x = (0..k_blocks)
        .into_par_iter()
        .map(|k| {
            let mut target = &state.w[k] - &state.y[k] / beta;
            if problem.is_last(k) {
                target += problem.q();
            }
            let sub = ProxSubproblem {
                alpha: beta,
                target: &target,
                tau: 0.0,
                anchor: &state.x[k],
            };
            solvers
                .get(k)
                .solve(k, problem.block(k), &sub, Accuracy::Exact)
                .map(|s| s.x)
        })
        .collect::<Result<Vec<_>>>()?;
    let ex: Vec<DVector<f64>> = (0..k_blocks)
        .map(|k| {
            let mut e = problem.block(k).coupling.apply(&x[k]);
            if problem.is_last(k) {
                e -= problem.q();
            }
            e
        })
        .collect();
    let v: Vec<DVector<f64>> = ex.iter().zip(&state.y).map(|(e, y)| e + y / beta).collect();
    let w = vsadmm_w_update(&v)?;
    let y = (0..k_blocks).map(|k| &state.y[k] + (&ex[k] - &w[k]) * beta).collect();
    Ok(VsadmmState { w, x, y })
}

pub fn run_vsadmm(
    problem: &Problem,
    beta: f64,
    solvers: &BlockSolvers,
    max_iters: usize,
    stop_eps: f64,
    stop: StopMode,
) -> Result<BaselineRun<VsadmmState>> {
    baseline_loop(problem, max_iters, stop_eps, stop, VsadmmState::zeros(problem), |s| {
        vsadmm_step(s, problem, beta, solvers)
    })
}

// ---------------------------------------------------------------------------
// Proximal Jacobian ADMM

#[derive(Clone, Debug, PartialEq)]
pub struct JadmmState {
    pub x: Vec<DVector<f64>>,
    pub lambda: DVector<f64>,
}

impl JadmmState {
    pub fn zeros(problem: &Problem) -> Self {
        JadmmState {
            x: problem.dims().into_iter().map(DVector::zeros).collect(),
            lambda: DVector::zeros(problem.m()),
        }
    }
}

impl View for JadmmState {
    fn blocks(&self) -> Vec<DVector<f64>> {
        self.x.clone()
    }
    fn duals(&self) -> Vec<DVector<f64>> {
        vec![self.lambda.clone()]
    }
    fn multiplier(&self) -> DVector<f64> {
        -&self.lambda
    }
}

/// Block solvers for `f_k + (β/2)||E_k x − t||² + (τ_k/2)||x − x_k^ν||²`.
pub fn prox_jadmm_solvers(problem: &Problem, params: &BaselineParams, inner: InnerChoice) -> Result<BlockSolvers> {
    BlockSolvers::new(problem, params.beta, &params.jadmm_weights(problem)?, inner)
}

pub fn prox_jadmm_step(
    state: &JadmmState,
    problem: &Problem,
    params: &BaselineParams,
    solvers: &BlockSolvers,
) -> Result<JadmmState> {
    let beta = params.beta;
    let weights = params.jadmm_weights(problem)?;
    let mut ex = DVector::zeros(problem.m());
    for (b, xk) in problem.blocks().iter().zip(&state.x) {
        b.coupling.apply_add(xk, 1.0, &mut ex);
    }
    let base = problem.q() + &state.lambda / beta - &ex;
    let x = (0..problem.num_blocks())
        .into_par_iter()
        .map(|k| {
            let block = problem.block(k);
            let mut target = base.clone();
            block.coupling.apply_add(&state.x[k], 1.0, &mut target);
            let sub = ProxSubproblem {
                alpha: beta,
                target: &target,
                tau: weights[k],
                anchor: &state.x[k],
            };
            solvers.get(k).solve(k, block, &sub, Accuracy::Exact).map(|s| s.x)
        })
        .collect::<Result<Vec<_>>>()?;
    let residual = model::constraint_residual(&x, problem)?;
    let lambda = &state.lambda - residual * (params.gamma_damp * beta);
    Ok(JadmmState { x, lambda })
}

pub fn run_prox_jadmm(
    problem: &Problem,
    params: &BaselineParams,
    solvers: &BlockSolvers,
    max_iters: usize,
    stop_eps: f64,
    stop: StopMode,
) -> Result<BaselineRun<JadmmState>> {
    params.validate()?;
    baseline_loop(problem, max_iters, stop_eps, stop, JadmmState::zeros(problem), |s| {
        prox_jadmm_step(s, problem, params, solvers)
    })
}

// ---------------------------------------------------------------------------
// Two-block ADMM for the lasso

/// Lasso data extracted from a two-block problem `(½||A·−b||², I)`,
/// `(λ||·||₁, −I)`, with the x-update factorization cached.
#[derive(Clone, Debug)]
pub struct Admm2Lasso {
    solver: CachedQuadSolver,
    lambda: f64,
    beta: f64,
    step: f64,
}

impl Admm2Lasso {
    pub fn new(problem: &Problem, beta: f64, step: f64) -> Result<Self> {
        if !(beta > 0.0) || !(step > 0.0) {
            return Err(Error::InvalidParameter(format!("beta={beta}, step={step}")));
        }
        let unsupported = || Error::Unsupported("two-block ADMM needs the lasso layout".into());
        if problem.num_blocks() != 2 || problem.q().iter().any(|v| *v != 0.0) {
            return Err(unsupported());
        }
        let (b1, b2) = (problem.block(0), problem.block(1));
        let d = b1.dim;
        let smooth = b1.objective.smooth.as_ref().ok_or_else(unsupported)?;
        let SmoothKind::LeastSquares { b } = &smooth.kind else {
            return Err(unsupported());
        };
        let lambda = match b2.objective.nonsmooth {
            Some(Nonsmooth::L1 { lambda }) if b2.objective.smooth.is_none() => lambda,
            _ => return Err(unsupported()),
        };
        let identity = |c: &Coupling, sign: f64| c.to_dense() == nalgebra::DMatrix::identity(d, d) * sign;
        if b1.objective.l1_weight() != 0.0
            || !identity(&b1.coupling, 1.0)
            || !identity(&b2.coupling, -1.0)
            || !matches!(b1.feasible, FeasibleSet::Whole)
            || !matches!(b2.feasible, FeasibleSet::Whole)
        {
            return Err(unsupported());
        }
        let solver = CachedQuadSolver::new(smooth.a.to_dense(), b.clone(), Coupling::identity(d), beta, 0.0)?;
        Ok(Admm2Lasso {
            solver,
            lambda,
            beta,
            step,
        })
    }
}

/// Scaled form: `u = y/β`.
#[derive(Clone, Debug, PartialEq)]
pub struct Admm2State {
    pub x: DVector<f64>,
    pub z: DVector<f64>,
    pub u: DVector<f64>,
    beta: f64,
}

impl Admm2State {
    pub fn zeros(d: usize, beta: f64) -> Self {
        Admm2State {
            x: DVector::zeros(d),
            z: DVector::zeros(d),
            u: DVector::zeros(d),
            beta,
        }
    }
}

impl View for Admm2State {
    fn blocks(&self) -> Vec<DVector<f64>> {
        vec![self.x.clone(), self.z.clone()]
    }
    fn duals(&self) -> Vec<DVector<f64>> {
        vec![&self.u * self.beta]
    }
    fn multiplier(&self) -> DVector<f64> {
        &self.u * self.beta
    }
}

/// `x = (AᵀA + βI)⁻¹(Aᵀb + β(z − u))`, `z = S(x + u, λ/β)`,
/// `u ← u + s(x − z)` with dual step `s`.
pub fn admm2_lasso_step(state: &Admm2State, lasso: &Admm2Lasso) -> Result<Admm2State> {
    let target = &state.z - &state.u;
    let x = lasso.solver.solve(&ProxSubproblem {
        alpha: lasso.beta,
        target: &target,
        tau: 0.0,
        anchor: &state.x,
    })?;
    let kappa = lasso.lambda / lasso.beta;
    let z = (&x + &state.u).map(|v| shrink(v, kappa));
    let u = &state.u + (&x - &z) * lasso.step;
    Ok(Admm2State {
        x,
        z,
        u,
        beta: lasso.beta,
    })
}

pub fn run_admm2_lasso(
    problem: &Problem,
    lasso: &Admm2Lasso,
    max_iters: usize,
    stop_eps: f64,
    stop: StopMode,
) -> Result<BaselineRun<Admm2State>> {
    let init = Admm2State::zeros(problem.block(0).dim, lasso.beta);
    baseline_loop(problem, max_iters, stop_eps, stop, init, |s| admm2_lasso_step(s, lasso))
}
