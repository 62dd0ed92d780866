//! Problem description, iterate state and the geometry shared by every engine.
//!
//! The problem is
//!
//! ```text
//! minimize   f_1(x_1) + ... + f_K(x_K)
//! subject to E_1 x_1 + ... + E_K x_K = q,   x_k in X_k
//! ```
//!
//! with `f_k(x) = g_k(A_k x) + h_k(x)`. The offset `q` belongs to block K.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Coupling, DataMatrix};

/// Smooth outer function `g_k` applied to `A_k x`.
#[derive(Clone, Debug, PartialEq)]
pub enum SmoothKind {
    /// `½||u − b||²`
    LeastSquares { b: DVector<f64> },
    /// `Σ_j log(1 + exp(−labels_j u_j))`
    Logistic { labels: DVector<f64> },
    /// `½||u||²`
    Quadratic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoothPart {
    pub a: DataMatrix,
    pub kind: SmoothKind,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Nonsmooth {
    /// `lambda * ||x||_1`
    L1 { lambda: f64 },
    Zero,
}

/// `f_k(x) = g_k(A_k x) + h_k(x)`; at least one part is present.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionDescriptor {
    pub smooth: Option<SmoothPart>,
    pub nonsmooth: Option<Nonsmooth>,
}

#[inline]
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl SmoothPart {
    pub fn least_squares(a: DataMatrix, b: DVector<f64>) -> Self {
        SmoothPart {
            a,
            kind: SmoothKind::LeastSquares { b },
        }
    }

    pub fn logistic(a: DataMatrix, labels: DVector<f64>) -> Self {
        SmoothPart {
            a,
            kind: SmoothKind::Logistic { labels },
        }
    }

    /// `½||A x||²`.
    pub fn quadratic(a: DataMatrix) -> Self {
        SmoothPart {
            a,
            kind: SmoothKind::Quadratic,
        }
    }

    fn validate(&self) -> Result<()> {
        let p = self.a.nrows();
        let len = match &self.kind {
            SmoothKind::LeastSquares { b } => b.len(),
            SmoothKind::Logistic { labels } => labels.len(),
            SmoothKind::Quadratic => p,
        };
        if len != p {
            return Err(Error::Dimension(format!(
                "smooth part has {p} rows but data vector of length {len}"
            )));
        }
        Ok(())
    }

    /// `g(A x)`.
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let ax = self.a.mul_vec(x);
        self.value_at_image(&ax)
    }

    fn value_at_image(&self, ax: &DVector<f64>) -> f64 {
        match &self.kind {
            SmoothKind::LeastSquares { b } => 0.5 * (ax - b).norm_squared(),
            SmoothKind::Logistic { labels } => ax
                .iter()
                .zip(labels.iter())
                .map(|(u, l)| softplus(-l * u))
                .sum(),
            SmoothKind::Quadratic => 0.5 * ax.norm_squared(),
        }
    }

    /// Value and gradient `A^T ∇g(A x)`.
    pub fn value_grad(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let ax = self.a.mul_vec(x);
        let value = self.value_at_image(&ax);
        let outer = match &self.kind {
            SmoothKind::LeastSquares { b } => ax - b,
            SmoothKind::Logistic { labels } => {
                DVector::from_fn(ax.len(), |j, _| -labels[j] * sigmoid(-labels[j] * ax[j]))
            }
            SmoothKind::Quadratic => ax,
        };
        (value, self.a.tr_mul_vec(&outer))
    }

    /// Upper bound on the curvature of `g` (1 for squares, 1/4 for logistic).
    pub(crate) fn curvature_bound(&self) -> f64 {
        match self.kind {
            SmoothKind::Logistic { .. } => 0.25,
            _ => 1.0,
        }
    }
}

impl FunctionDescriptor {
    pub fn smooth(part: SmoothPart) -> Self {
        FunctionDescriptor {
            smooth: Some(part),
            nonsmooth: None,
        }
    }

    pub fn l1(lambda: f64) -> Self {
        FunctionDescriptor {
            smooth: None,
            nonsmooth: Some(Nonsmooth::L1 { lambda }),
        }
    }

    pub fn composite(part: SmoothPart, lambda: f64) -> Self {
        FunctionDescriptor {
            smooth: Some(part),
            nonsmooth: Some(Nonsmooth::L1 { lambda }),
        }
    }

    /// Weight of the ℓ1 term, 0 when absent.
    pub fn l1_weight(&self) -> f64 {
        match self.nonsmooth {
            Some(Nonsmooth::L1 { lambda }) => lambda,
            _ => 0.0,
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let smooth = self.smooth.as_ref().map_or(0.0, |s| s.value(x));
        smooth + self.l1_weight() * x.lp_norm(1)
    }

    /// Gradient of the smooth part (zero vector when absent).
    pub fn smooth_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        self.smooth
            .as_ref()
            .map_or_else(|| DVector::zeros(x.len()), |s| s.value_grad(x).1)
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.smooth.is_none() && self.nonsmooth.is_none() {
            return Err(Error::InvalidProblem(
                "block objective needs a smooth or a nonsmooth part".into(),
            ));
        }
        if let Some(s) = &self.smooth {
            s.validate()?;
            if s.a.ncols() != n {
                return Err(Error::Dimension(format!(
                    "A_k has {} columns, block dimension is {n}",
                    s.a.ncols()
                )));
            }
        }
        if let Some(Nonsmooth::L1 { lambda }) = self.nonsmooth {
            if !(lambda >= 0.0) || !lambda.is_finite() {
                return Err(Error::InvalidParameter(format!("l1 weight {lambda}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeasibleSet {
    Whole,
    Box { lo: DVector<f64>, hi: DVector<f64> },
}

impl FeasibleSet {
    pub fn is_whole(&self) -> bool {
        matches!(self, FeasibleSet::Whole)
    }

    pub fn bounds(&self, i: usize) -> (f64, f64) {
        match self {
            FeasibleSet::Whole => (f64::NEG_INFINITY, f64::INFINITY),
            FeasibleSet::Box { lo, hi } => (lo[i], hi[i]),
        }
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            FeasibleSet::Whole => x.clone(),
            FeasibleSet::Box { lo, hi } => {
                DVector::from_fn(x.len(), |i, _| x[i].clamp(lo[i], hi[i]))
            }
        }
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        match self {
            FeasibleSet::Whole => true,
            FeasibleSet::Box { lo, hi } => (0..x.len()).all(|i| lo[i] <= x[i] && x[i] <= hi[i]),
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if let FeasibleSet::Box { lo, hi } = self {
            if lo.len() != n || hi.len() != n {
                return Err(Error::Dimension("box bounds must match block dimension".into()));
            }
            for i in 0..n {
                if lo[i].is_nan() || hi[i].is_nan() || lo[i] > hi[i] {
                    return Err(Error::InvalidProblem(format!(
                        "box bound {i}: lo {} > hi {}",
                        lo[i], hi[i]
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockSpec {
    pub dim: usize,
    pub coupling: Coupling,
    pub objective: FunctionDescriptor,
    pub feasible: FeasibleSet,
}

impl BlockSpec {
    pub fn new(coupling: Coupling, objective: FunctionDescriptor) -> Self {
        BlockSpec {
            dim: coupling.cols(),
            coupling,
            objective,
            feasible: FeasibleSet::Whole,
        }
    }

    pub fn with_box(mut self, lo: DVector<f64>, hi: DVector<f64>) -> Self {
        self.feasible = FeasibleSet::Box { lo, hi };
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    blocks: Vec<BlockSpec>,
    q: DVector<f64>,
}

impl Problem {
    pub fn new(blocks: Vec<BlockSpec>, q: DVector<f64>) -> Result<Self> {
        if blocks.len() < 2 {
            return Err(Error::InvalidProblem(format!(
                "need at least two blocks, got {}",
                blocks.len()
            )));
        }
        let m = q.len();
        for (k, b) in blocks.iter().enumerate() {
            b.coupling.validate()?;
            if b.coupling.rows() != m {
                return Err(Error::Dimension(format!(
                    "block {k}: E_k has {} rows, constraint dimension is {m}",
                    b.coupling.rows()
                )));
            }
            if b.coupling.cols() != b.dim {
                return Err(Error::Dimension(format!(
                    "block {k}: E_k has {} columns, block dimension is {}",
                    b.coupling.cols(),
                    b.dim
                )));
            }
            b.objective.validate(b.dim)?;
            b.feasible.validate(b.dim)?;
        }
        Ok(Problem { blocks, q })
    }

    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    pub fn block(&self, k: usize) -> &BlockSpec {
        &self.blocks[k]
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn m(&self) -> usize {
        self.q.len()
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.dim).collect()
    }

    /// Is `k` the block that carries `q`?
    pub fn is_last(&self, k: usize) -> bool {
        k + 1 == self.blocks.len()
    }

    pub(crate) fn check_x(&self, x: &[DVector<f64>]) -> Result<()> {
        if x.len() != self.blocks.len() {
            return Err(Error::Dimension(format!(
                "expected {} blocks, got {}",
                self.blocks.len(),
                x.len()
            )));
        }
        for (k, (xk, b)) in x.iter().zip(&self.blocks).enumerate() {
            if xk.len() != b.dim {
                return Err(Error::Dimension(format!(
                    "block {k}: expected length {}, got {}",
                    b.dim,
                    xk.len()
                )));
            }
        }
        Ok(())
    }

    /// Spectral norm of the stacked matrix `[E_1 ... E_K]`.
    pub fn coupling_norm(&self) -> Result<f64> {
        let dims = self.dims();
        let total: usize = dims.iter().sum();
        let split = |v: &DVector<f64>| -> Vec<DVector<f64>> {
            let mut out = Vec::with_capacity(dims.len());
            let mut at = 0;
            for &d in &dims {
                out.push(v.rows(at, d).into_owned());
                at += d;
            }
            out
        };
        let op = |v: &DVector<f64>| {
            let parts = split(v);
            let mut acc = DVector::zeros(self.m());
            for (b, p) in self.blocks.iter().zip(&parts) {
                b.coupling.apply_add(p, 1.0, &mut acc);
            }
            acc
        };
        let adj = |u: &DVector<f64>| {
            let mut out = DVector::zeros(total);
            let mut at = 0;
            for b in &self.blocks {
                out.rows_mut(at, b.dim).copy_from(&b.coupling.apply_transpose(u));
                at += b.dim;
            }
            out
        };
        Ok(linalg::power_iteration(total, op, adj, 1e-10, 1000)?.value)
    }
}

/// State of the decomposition iteration: `w ∈ W`, the primal blocks, the
/// per-block multipliers `η`, the common value `ζ̄` of `ζ ∈ W⊥`, and `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct IterateState {
    pub w: Vec<DVector<f64>>,
    pub x: Vec<DVector<f64>>,
    pub eta: Vec<DVector<f64>>,
    pub zeta: DVector<f64>,
    pub y: Vec<DVector<f64>>,
}

impl IterateState {
    /// All-zero start.
    pub fn zeros(problem: &Problem) -> Self {
        let k = problem.num_blocks();
        let m = problem.m();
        IterateState {
            w: vec![DVector::zeros(m); k],
            x: problem.dims().into_iter().map(DVector::zeros).collect(),
            eta: vec![DVector::zeros(m); k],
            zeta: DVector::zeros(m),
            y: vec![DVector::zeros(m); k],
        }
    }

    /// Start from `(w, x, y)`; `η⁰ = y⁰` and `ζ̄⁰` is its mean.
    pub fn from_primal_dual(
        problem: &Problem,
        w: Vec<DVector<f64>>,
        x: Vec<DVector<f64>>,
        y: Vec<DVector<f64>>,
    ) -> Result<Self> {
        problem.check_x(&x)?;
        let k = problem.num_blocks();
        let m = problem.m();
        if w.len() != k || y.len() != k || w.iter().chain(&y).any(|v| v.len() != m) {
            return Err(Error::Dimension("w and y must be K m-vectors".into()));
        }
        let zeta = linalg::mean_of(&y);
        Ok(IterateState {
            eta: y.clone(),
            w,
            x,
            zeta,
            y,
        })
    }

    pub fn num_blocks(&self) -> usize {
        self.x.len()
    }

    /// `||w_1 + ... + w_K||`.
    pub fn w_sum_norm(&self) -> f64 {
        let mut acc = DVector::zeros(self.zeta.len());
        for wk in &self.w {
            acc += wk;
        }
        acc.norm()
    }

    /// Squared G-distance over `(w, x, η, ζ)`; ζ counts K times.
    pub fn g_dist_sq(&self, other: &IterateState, rho: f64, c: f64) -> f64 {
        let k = self.num_blocks() as f64;
        rho * linalg::stacked_diff_norm_sq(&self.w, &other.w)
            + linalg::stacked_diff_norm_sq(&self.x, &other.x) / c
            + linalg::stacked_diff_norm_sq(&self.eta, &other.eta) / rho
            + k * (&self.zeta - &other.zeta).norm_squared() / rho
    }

    pub fn x_norm(&self) -> f64 {
        linalg::stacked_norm_sq(&self.x).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub rho: f64,
    pub c: f64,
    pub max_iters: usize,
    pub stop_eps: f64,
}

impl SolverParams {
    pub fn new(rho: f64, c: f64, max_iters: usize, stop_eps: f64) -> Result<Self> {
        let p = SolverParams {
            rho,
            c,
            max_iters,
            stop_eps,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::InvalidParameter(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::InvalidParameter(format!("c must be positive, got {}", self.c)));
        }
        if !(self.stop_eps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "stop_eps must be positive, got {}",
                self.stop_eps
            )));
        }
        Ok(())
    }
}

fn check_same_len(v: &[DVector<f64>]) -> Result<usize> {
    let m = v
        .first()
        .map(|f| f.len())
        .ok_or_else(|| Error::Dimension("empty tuple".into()))?;
    if v.iter().any(|vk| vk.len() != m) {
        return Err(Error::Dimension("components differ in length".into()));
    }
    Ok(m)
}

/// Orthogonal projection onto `W = {w : Σ w_k = 0}`.
pub fn project_onto_w(v: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    check_same_len(v)?;
    let mean = linalg::mean_of(v);
    Ok(v.iter().map(|vk| vk - &mean).collect())
}

/// Common value of the projection onto `W⊥ = {w : w_1 = ... = w_K}`.
pub fn project_onto_wperp(v: &[DVector<f64>]) -> Result<DVector<f64>> {
    check_same_len(v)?;
    Ok(linalg::mean_of(v))
}

/// `ρ||dw||² + ||dx||²/c + ||dη||²/ρ + ||dζ||²/ρ`.
pub fn g_norm_sq(
    dw: &[DVector<f64>],
    dx: &[DVector<f64>],
    deta: &[DVector<f64>],
    dzeta: &[DVector<f64>],
    rho: f64,
    c: f64,
) -> Result<f64> {
    if !(rho > 0.0) || !(c > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "G-norm needs rho > 0 and c > 0, got rho={rho}, c={c}"
        )));
    }
    Ok(rho * linalg::stacked_norm_sq(dw)
        + linalg::stacked_norm_sq(dx) / c
        + linalg::stacked_norm_sq(deta) / rho
        + linalg::stacked_norm_sq(dzeta) / rho)
}

/// `Σ_k E_k x_k − q`.
pub fn constraint_residual(x: &[DVector<f64>], problem: &Problem) -> Result<DVector<f64>> {
    problem.check_x(x)?;
    let mut r = -problem.q();
    for (b, xk) in problem.blocks().iter().zip(x) {
        b.coupling.apply_add(xk, 1.0, &mut r);
    }
    Ok(r)
}

/// `Σ_k f_k(x_k)`.
pub fn objective(x: &[DVector<f64>], problem: &Problem) -> Result<f64> {
    problem.check_x(x)?;
    Ok(problem
        .blocks()
        .iter()
        .zip(x)
        .map(|(b, xk)| b.objective.value(xk))
        .sum())
}
