//! Per-block subproblem solvers.
//!
//! Every engine in this crate reduces a block update to
//!
//! ```text
//! minimize  f_k(x) + (alpha/2)||E_k x − target||² + (tau/2)||x − anchor||²   over x in X_k
//! ```
//!
//! For the decomposition engine `alpha = ρ/2`, `tau = 1/c` and
//! `target = w_k − (2/ρ) y_k (+ q for the last block)`. The baselines use the
//! same shape with their own weights. A solver is built once per block for a
//! fixed `(alpha, tau)` so factorizations can be cached.

mod lbfgs;
mod pgrad;
mod prox;
mod quad;

pub use lbfgs::{lbfgs_minimize, lbfgs_minimize_until, LbfgsOptions, LbfgsReport};
pub use pgrad::{ProxGradOptions, ProxGradSolver};
pub(crate) use prox::shrink;
pub use prox::{l1_prox_block, min_norm_subgradient, soft_threshold, subgrad_dist_l1, L1ProxSolver};
pub use quad::{quad_solve, CachedQuadSolver, QuadMode};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BlockSpec, SmoothKind};

/// Gradient-norm target used when an iterative solver is asked for an exact solve.
pub const EXACT_TOL: f64 = 1e-10;

/// Proximal subproblem data for one block.
#[derive(Clone, Copy, Debug)]
pub struct ProxSubproblem<'a> {
    pub alpha: f64,
    pub target: &'a DVector<f64>,
    pub tau: f64,
    pub anchor: &'a DVector<f64>,
}

impl ProxSubproblem<'_> {
    /// Value and gradient of the smooth part of the subproblem (everything but
    /// the ℓ1 term and the feasible set).
    pub fn smooth_value_grad(&self, block: &BlockSpec, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let (mut value, mut grad) = match &block.objective.smooth {
            Some(s) => s.value_grad(x),
            None => (0.0, DVector::zeros(x.len())),
        };
        let resid = block.coupling.apply(x) - self.target;
        value += 0.5 * self.alpha * resid.norm_squared();
        grad.axpy(self.alpha, &block.coupling.apply_transpose(&resid), 1.0);
        if self.tau != 0.0 {
            let dx = x - self.anchor;
            value += 0.5 * self.tau * dx.norm_squared();
            grad.axpy(self.tau, &dx, 1.0);
        }
        (value, grad)
    }

    /// Full subproblem value (infinite outside the feasible set).
    pub fn value(&self, block: &BlockSpec, x: &DVector<f64>) -> f64 {
        if !block.feasible.contains(x) {
            return f64::INFINITY;
        }
        self.smooth_value_grad(block, x).0 + block.objective.l1_weight() * x.lp_norm(1)
    }

    /// `dist(0, ∂φ(x))` including the normal cone of a box.
    pub fn subgrad_dist(&self, block: &BlockSpec, x: &DVector<f64>) -> f64 {
        let (_, g) = self.smooth_value_grad(block, x);
        min_norm_subgradient(x, &g, block.objective.l1_weight(), &block.feasible)
    }
}

/// Requested accuracy of a block solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Accuracy {
    Exact,
    /// `dist(0, ∂φ) <= bound`.
    Threshold(f64),
    /// `dist(0, ∂φ) <= base * min(1, ||x − anchor||)`.
    StepScaled { base: f64 },
}

impl Accuracy {
    pub fn tolerance(&self, x: &DVector<f64>, anchor: &DVector<f64>) -> f64 {
        match *self {
            Accuracy::Exact => EXACT_TOL,
            Accuracy::Threshold(t) => t,
            Accuracy::StepScaled { base } => base * (x - anchor).norm().min(1.0),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Accuracy::Exact)
    }
}

/// Block solution with a certified bound on `dist(0, ∂φ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSolution {
    pub x: DVector<f64>,
    pub subgrad_bound: f64,
    pub inner_iters: usize,
}

/// Which solver to use for smooth least-squares blocks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerChoice {
    /// Cached factorization (exact).
    #[default]
    Direct,
    /// Warm-started L-BFGS, certified by the gradient norm.
    Lbfgs,
}

#[derive(Clone, Debug)]
pub enum BlockSolver {
    Quadratic(CachedQuadSolver),
    L1Prox(L1ProxSolver),
    /// Warm-started L-BFGS. Quadratic blocks keep a factorization to fall
    /// back on when the requested tolerance is below what L-BFGS reaches in
    /// floating point.
    Lbfgs {
        alpha: f64,
        tau: f64,
        options: LbfgsOptions,
        fallback: Option<Box<CachedQuadSolver>>,
    },
    ProxGradient(ProxGradSolver),
}

impl BlockSolver {
    pub fn build(block: &BlockSpec, alpha: f64, tau: f64, inner: InnerChoice) -> Result<Self> {
        if !(alpha >= 0.0) || !(tau >= 0.0) || alpha + tau == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "subproblem weights alpha={alpha}, tau={tau}"
            )));
        }
        let lambda = block.objective.l1_weight();
        let whole = block.feasible.is_whole();
        match &block.objective.smooth {
            None => {
                if let Some(s) = block.coupling.gram_scale() {
                    return Ok(BlockSolver::L1Prox(L1ProxSolver::new(s, alpha, tau, lambda)?));
                }
                if lambda == 0.0 && whole {
                    let q = CachedQuadSolver::new(
                        DMatrix::zeros(0, block.dim),
                        DVector::zeros(0),
                        block.coupling.clone(),
                        alpha,
                        tau,
                    )?;
                    return Ok(BlockSolver::Quadratic(q));
                }
                Ok(BlockSolver::ProxGradient(ProxGradSolver::new(block, alpha, tau)?))
            }
            Some(s) => {
                if lambda != 0.0 || !whole {
                    return Ok(BlockSolver::ProxGradient(ProxGradSolver::new(block, alpha, tau)?));
                }
                let factored = match &s.kind {
                    SmoothKind::Logistic { .. } => None,
                    SmoothKind::LeastSquares { b } => Some(b.clone()),
                    SmoothKind::Quadratic => Some(DVector::zeros(s.a.nrows())),
                }
                .map(|b| CachedQuadSolver::new(s.a.to_dense(), b, block.coupling.clone(), alpha, tau))
                .transpose()?;
                match (factored, inner) {
                    (Some(q), InnerChoice::Direct) => Ok(BlockSolver::Quadratic(q)),
                    (fallback, _) => Ok(BlockSolver::Lbfgs {
                        alpha,
                        tau,
                        options: LbfgsOptions::default(),
                        fallback: fallback.map(Box::new),
                    }),
                }
            }
        }
    }

    fn weights(&self) -> (f64, f64) {
        match self {
            BlockSolver::Quadratic(q) => (q.alpha(), q.tau()),
            BlockSolver::L1Prox(p) => (p.alpha(), p.tau()),
            BlockSolver::Lbfgs { alpha, tau, .. } => (*alpha, *tau),
            BlockSolver::ProxGradient(p) => (p.alpha(), p.tau()),
        }
    }

    /// Is the solve closed-form (certificate identically zero)?
    pub fn is_closed_form(&self) -> bool {
        matches!(self, BlockSolver::Quadratic(_) | BlockSolver::L1Prox(_))
    }

    /// Solves block `k`'s subproblem to the requested accuracy.
    pub fn solve(
        &self,
        k: usize,
        block: &BlockSpec,
        sub: &ProxSubproblem,
        accuracy: Accuracy,
    ) -> Result<BlockSolution> {
        let (alpha, tau) = self.weights();
        if !same(alpha, sub.alpha) || !same(tau, sub.tau) {
            return Err(Error::ParameterMismatch {
                cached_alpha: alpha,
                cached_tau: tau,
                alpha: sub.alpha,
                tau: sub.tau,
            });
        }
        match self {
            BlockSolver::Quadratic(q) => Ok(BlockSolution {
                x: q.solve(sub)?,
                subgrad_bound: 0.0,
                inner_iters: 0,
            }),
            BlockSolver::L1Prox(p) => Ok(BlockSolution {
                x: p.solve(block, sub),
                subgrad_bound: 0.0,
                inner_iters: 0,
            }),
            BlockSolver::Lbfgs { options, fallback, .. } => {
                let report = lbfgs_minimize_until(
                    |x: &DVector<f64>, g: &mut DVector<f64>| {
                        let (v, grad) = sub.smooth_value_grad(block, x);
                        g.copy_from(&grad);
                        v
                    },
                    sub.anchor.clone(),
                    |x, gnorm| gnorm <= accuracy.tolerance(x, sub.anchor),
                    options,
                );
                let threshold = accuracy.tolerance(&report.x, sub.anchor);
                if !report.converged {
                    if let Some(q) = fallback {
                        return Ok(BlockSolution {
                            x: q.solve(sub)?,
                            subgrad_bound: 0.0,
                            inner_iters: report.iters,
                        });
                    }
                    return Err(Error::InnerBudget {
                        block: k,
                        iters: report.iters,
                        bound: report.grad_norm,
                        threshold,
                    });
                }
                Ok(BlockSolution {
                    x: report.x,
                    subgrad_bound: report.grad_norm,
                    inner_iters: report.iters,
                })
            }
            BlockSolver::ProxGradient(p) => p.solve(k, block, sub, accuracy),
        }
    }
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-14 * a.abs().max(b.abs())
}

/// One solver per block, all built for the same `alpha` and per-block `tau`.
#[derive(Clone, Debug)]
pub struct BlockSolvers {
    solvers: Vec<BlockSolver>,
}

impl BlockSolvers {
    pub fn new(
        problem: &crate::model::Problem,
        alpha: f64,
        taus: &[f64],
        inner: InnerChoice,
    ) -> Result<Self> {
        if taus.len() != problem.num_blocks() {
            return Err(Error::Dimension(format!(
                "{} proximal weights for {} blocks",
                taus.len(),
                problem.num_blocks()
            )));
        }
        let solvers = problem
            .blocks()
            .iter()
            .zip(taus)
            .enumerate()
            .map(|(k, (b, &tau))| {
                BlockSolver::build(b, alpha, tau, inner).map_err(|e| Error::BlockSolve {
                    block: k,
                    reason: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BlockSolvers { solvers })
    }

    /// Solvers for the decomposition engine: `alpha = ρ/2`, `tau = 1/c`.
    pub fn for_ada(
        problem: &crate::model::Problem,
        params: &crate::model::SolverParams,
        inner: InnerChoice,
    ) -> Result<Self> {
        params.validate()?;
        let taus = vec![1.0 / params.c; problem.num_blocks()];
        Self::new(problem, params.rho / 2.0, &taus, inner)
    }

    pub fn get(&self, k: usize) -> &BlockSolver {
        &self.solvers[k]
    }

    pub fn len(&self) -> usize {
        self.solvers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solvers.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Coupling, DataMatrix};
    use crate::model::{FunctionDescriptor, SmoothPart};

    #[test]
    fn dispatch_picks_structured_solvers() {
        let a = DataMatrix::Dense(DMatrix::from_fn(3, 2, |i, j| (i + 2 * j) as f64));
        let ls = BlockSpec::new(
            Coupling::identity(2),
            FunctionDescriptor::smooth(SmoothPart::least_squares(a.clone(), DVector::zeros(3))),
        );
        let l1 = BlockSpec::new(Coupling::neg_identity(2), FunctionDescriptor::l1(0.5));
        let logit = BlockSpec::new(
            Coupling::identity(2),
            FunctionDescriptor::smooth(SmoothPart::logistic(a.clone(), DVector::from_element(3, 1.0))),
        );
        let comp = BlockSpec::new(
            Coupling::identity(2),
            FunctionDescriptor::composite(SmoothPart::least_squares(a, DVector::zeros(3)), 0.1),
        );
        let b = |s: &BlockSpec, inner| BlockSolver::build(s, 1.0, 1.0, inner).unwrap();
        assert!(matches!(b(&ls, InnerChoice::Direct), BlockSolver::Quadratic(_)));
        assert!(matches!(b(&ls, InnerChoice::Lbfgs), BlockSolver::Lbfgs { .. }));
        assert!(matches!(b(&l1, InnerChoice::Direct), BlockSolver::L1Prox(_)));
        assert!(matches!(b(&logit, InnerChoice::Direct), BlockSolver::Lbfgs { .. }));
        assert!(matches!(b(&comp, InnerChoice::Direct), BlockSolver::ProxGradient(_)));
        assert!(BlockSolver::build(&ls, 0.0, 0.0, InnerChoice::Direct).is_err());
    }

    #[test]
    fn solve_rejects_mismatched_weights() {
        let l1 = BlockSpec::new(Coupling::identity(2), FunctionDescriptor::l1(0.5));
        let s = BlockSolver::build(&l1, 1.0, 1.0, InnerChoice::Direct).unwrap();
        let t = DVector::zeros(2);
        let sub = ProxSubproblem {
            alpha: 2.0,
            target: &t,
            tau: 1.0,
            anchor: &t,
        };
        assert!(matches!(
            s.solve(0, &l1, &sub, Accuracy::Exact),
            Err(Error::ParameterMismatch { .. })
        ));
    }
}
