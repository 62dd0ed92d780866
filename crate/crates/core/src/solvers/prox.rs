use nalgebra::DVector;

use super::ProxSubproblem;
use crate::error::{Error, Result};
use crate::model::{BlockSpec, FeasibleSet};

#[inline]
pub(crate) fn shrink(a: f64, kappa: f64) -> f64 {
    if a > kappa {
        a - kappa
    } else if a < -kappa {
        a + kappa
    } else {
        0.0
    }
}

/// Soft thresholding `S(a, κ)`, the prox of `κ|·|`.
pub fn soft_threshold(a: f64, kappa: f64) -> Result<f64> {
    if !(kappa >= 0.0) {
        return Err(Error::InvalidParameter(format!("threshold must be nonnegative, got {kappa}")));
    }
    Ok(shrink(a, kappa))
}

/// Exact block update of the decomposition engine for an ℓ1 block with
/// `E_k = sign · I`:
/// `S((sign·(ρ/2)(w − 2y/ρ) + x/c) / σ, λ/σ)` with `σ = ρ/2 + 1/c`.
/// For `sign = −1` this is `S((y + x/c − ρw/2)/σ, λ/σ)`.
pub fn l1_prox_block(
    w: &DVector<f64>,
    x: &DVector<f64>,
    y: &DVector<f64>,
    rho: f64,
    c: f64,
    lambda1: f64,
    sign: f64,
) -> Result<DVector<f64>> {
    if sign != 1.0 && sign != -1.0 {
        return Err(Error::Unsupported(format!("l1 prox needs E = ±I, got sign {sign}")));
    }
    if !(lambda1 >= 0.0) {
        return Err(Error::InvalidParameter(format!("l1 weight {lambda1}")));
    }
    let sigma = rho / 2.0 + 1.0 / c;
    let kappa = lambda1 / sigma;
    Ok(DVector::from_fn(x.len(), |i, _| {
        let center = (sign * (rho / 2.0 * w[i] - y[i]) + x[i] / c) / sigma;
        shrink(center, kappa)
    }))
}

/// Exact solver for `λ||x||₁ + (alpha/2)||Ex − t||² + (tau/2)||x − a||²` over a
/// box when `EᵀE = sI`: the problem separates per coordinate.
#[derive(Clone, Debug)]
pub struct L1ProxSolver {
    gram_scale: f64,
    alpha: f64,
    tau: f64,
    lambda: f64,
    sigma: f64,
}

impl L1ProxSolver {
    pub fn new(gram_scale: f64, alpha: f64, tau: f64, lambda: f64) -> Result<Self> {
        let sigma = alpha * gram_scale + tau;
        if !(sigma > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(L1ProxSolver {
            gram_scale,
            alpha,
            tau,
            lambda,
            sigma,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn gram_scale(&self) -> f64 {
        self.gram_scale
    }

    pub fn solve(&self, block: &BlockSpec, sub: &ProxSubproblem) -> DVector<f64> {
        let mut center = block.coupling.apply_transpose(sub.target) * self.alpha;
        if self.tau != 0.0 {
            center.axpy(self.tau, sub.anchor, 1.0);
        }
        center /= self.sigma;
        let kappa = self.lambda / self.sigma;
        DVector::from_fn(center.len(), |i, _| {
            let (lo, hi) = block.feasible.bounds(i);
            shrink(center[i], kappa).clamp(lo, hi)
        })
    }
}

/// Norm of the minimal element of `g + λ∂||·||₁(x) + N_X(x)`.
pub fn min_norm_subgradient(x: &DVector<f64>, g: &DVector<f64>, lambda: f64, feasible: &FeasibleSet) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.len() {
        let (lo, hi) = feasible.bounds(i);
        let xi = x[i];
        let (mut low, mut high) = if xi > 0.0 {
            (g[i] + lambda, g[i] + lambda)
        } else if xi < 0.0 {
            (g[i] - lambda, g[i] - lambda)
        } else {
            (g[i] - lambda, g[i] + lambda)
        };
        if xi <= lo {
            low = f64::NEG_INFINITY;
        }
        if xi >= hi {
            high = f64::INFINITY;
        }
        let d = if low > 0.0 {
            low
        } else if high < 0.0 {
            -high
        } else {
            0.0
        };
        acc += d * d;
    }
    acc.sqrt()
}

/// Distance from 0 to `g + λ∂||·||₁(x)`, with `g` the smooth gradient at `x`.
pub fn subgrad_dist_l1(x: &DVector<f64>, smooth_grad: &DVector<f64>, lambda1: f64) -> Result<f64> {
    if !(lambda1 >= 0.0) {
        return Err(Error::InvalidParameter(format!("l1 weight {lambda1}")));
    }
    if x.len() != smooth_grad.len() {
        return Err(Error::Dimension("x and gradient differ in length".into()));
    }
    Ok(min_norm_subgradient(x, smooth_grad, lambda1, &FeasibleSet::Whole))
}
