use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::ProxSubproblem;
use crate::error::{Error, Result};
use crate::linalg::Coupling;

/// How the normal matrix `AᵀA + alpha EᵀE + tau I` is factored.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuadMode {
    /// `EᵀE = sI`; factor `AᵀA + σI` (d×d).
    Primal,
    /// `EᵀE = sI` with more columns than rows; factor `AAᵀ + σI` (p×p) and
    /// apply the Woodbury identity.
    Woodbury,
    /// General coupling; factor the full d×d matrix.
    General,
}

/// Exact minimizer of `½||Ax − b||² + (alpha/2)||Ex − t||² + (tau/2)||x − a||²`
/// with the factorization computed once.
#[derive(Clone, Debug)]
pub struct CachedQuadSolver {
    a: DMatrix<f64>,
    coupling: Coupling,
    alpha: f64,
    tau: f64,
    sigma: f64,
    mode: QuadMode,
    factor: Cholesky<f64, Dyn>,
    atb: DVector<f64>,
}

impl CachedQuadSolver {
    /// Chooses Woodbury when `EᵀE` is a multiple of the identity and `A` has
    /// more columns than rows.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, coupling: Coupling, alpha: f64, tau: f64) -> Result<Self> {
        let mode = match coupling.gram_scale() {
            Some(_) if a.ncols() > a.nrows() => QuadMode::Woodbury,
            Some(_) => QuadMode::Primal,
            None => QuadMode::General,
        };
        Self::with_mode(a, b, coupling, alpha, tau, mode)
    }

    pub fn with_mode(
        a: DMatrix<f64>,
        b: DVector<f64>,
        coupling: Coupling,
        alpha: f64,
        tau: f64,
        mode: QuadMode,
    ) -> Result<Self> {
        if a.ncols() != coupling.cols() || b.len() != a.nrows() {
            return Err(Error::Dimension(format!(
                "A is {}x{}, b has {} entries, E has {} columns",
                a.nrows(),
                a.ncols(),
                b.len(),
                coupling.cols()
            )));
        }
        let d = a.ncols();
        let scale = coupling.gram_scale();
        let (matrix, sigma) = match (mode, scale) {
            (QuadMode::Primal, Some(s)) => {
                let sigma = alpha * s + tau;
                let mut m = a.tr_mul(&a);
                for i in 0..d {
                    m[(i, i)] += sigma;
                }
                (m, sigma)
            }
            (QuadMode::Woodbury, Some(s)) => {
                let sigma = alpha * s + tau;
                let mut m = &a * a.transpose();
                for i in 0..m.nrows() {
                    m[(i, i)] += sigma;
                }
                (m, sigma)
            }
            (QuadMode::General, _) => {
                let mut m = a.tr_mul(&a) + coupling.gram() * alpha;
                for i in 0..d {
                    m[(i, i)] += tau;
                }
                (m, 0.0)
            }
            (_, None) => {
                return Err(Error::InvalidParameter(
                    "primal/Woodbury modes need EᵀE to be a multiple of the identity".into(),
                ))
            }
        };
        if matches!(mode, QuadMode::Primal | QuadMode::Woodbury) && !(sigma > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        let factor = Cholesky::new(matrix).ok_or(Error::NotPositiveDefinite)?;
        let atb = a.tr_mul(&b);
        Ok(CachedQuadSolver {
            a,
            coupling,
            alpha,
            tau,
            sigma,
            mode,
            factor,
            atb,
        })
    }

    pub fn mode(&self) -> QuadMode {
        self.mode
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `(AᵀA + alpha EᵀE + tau I)⁻¹ r`.
    pub fn solve_normal(&self, r: &DVector<f64>) -> DVector<f64> {
        match self.mode {
            QuadMode::Primal | QuadMode::General => self.factor.solve(r),
            QuadMode::Woodbury => {
                let inner = self.factor.solve(&(&self.a * r));
                (r - self.a.tr_mul(&inner)) / self.sigma
            }
        }
    }

    pub fn solve(&self, sub: &ProxSubproblem) -> Result<DVector<f64>> {
        if !super::same(self.alpha, sub.alpha) || !super::same(self.tau, sub.tau) {
            return Err(Error::ParameterMismatch {
                cached_alpha: self.alpha,
                cached_tau: self.tau,
                alpha: sub.alpha,
                tau: sub.tau,
            });
        }
        let mut rhs = self.atb.clone();
        rhs.axpy(self.alpha, &self.coupling.apply_transpose(sub.target), 1.0);
        if self.tau != 0.0 {
            rhs.axpy(self.tau, sub.anchor, 1.0);
        }
        Ok(self.solve_normal(&rhs))
    }
}

/// Block update of the decomposition engine for a least-squares block:
/// `[AᵀA + (ρ/2 + 1/c) I]⁻¹ (Aᵀb + (ρ/2) w + x/c − y)` when `E = I`.
pub fn quad_solve(
    solver: &CachedQuadSolver,
    w: &DVector<f64>,
    x: &DVector<f64>,
    y: &DVector<f64>,
    rho: f64,
    c: f64,
) -> Result<DVector<f64>> {
    let target = w - y * (2.0 / rho);
    solver.solve(&ProxSubproblem {
        alpha: rho / 2.0,
        target: &target,
        tau: 1.0 / c,
        anchor: x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pseudo(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |i, j| {
            let h = (i as u64 * 2654435761 + j as u64 * 40503 + seed * 97) % 10007;
            h as f64 / 5003.5 - 1.0
        })
    }

    #[test]
    fn scalar_identity_case() {
        let s = CachedQuadSolver::new(
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            Coupling::identity(1),
            1.0,
            1.0,
        )
        .unwrap();
        let v = DVector::from_element(1, 3.0);
        let x = quad_solve(&s, &v, &v, &v, 2.0, 1.0).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-15);
        let z = DVector::zeros(1);
        assert_eq!(quad_solve(&s, &z, &z, &z, 2.0, 1.0).unwrap()[0], 0.0);
    }

    #[test]
    fn rejects_mismatched_rho_c() {
        let s = CachedQuadSolver::new(
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            Coupling::identity(1),
            1.0,
            1.0,
        )
        .unwrap();
        let z = DVector::zeros(1);
        assert!(matches!(
            quad_solve(&s, &z, &z, &z, 4.0, 1.0),
            Err(Error::ParameterMismatch { .. })
        ));
    }

    #[test]
    fn woodbury_matches_primal_on_wide_matrix() {
        let a = pseudo(30, 50, 1);
        let b = DVector::from_fn(30, |i, _| (i as f64).cos());
        let e = Coupling::identity(50);
        let (rho, c) = (2.0, 0.5);
        let wood = CachedQuadSolver::new(a.clone(), b.clone(), e.clone(), rho / 2.0, 1.0 / c).unwrap();
        assert_eq!(wood.mode(), QuadMode::Woodbury);
        let primal =
            CachedQuadSolver::with_mode(a.clone(), b.clone(), e, rho / 2.0, 1.0 / c, QuadMode::Primal).unwrap();
        let w = DVector::from_fn(50, |i, _| (i as f64 * 0.3).sin());
        let x = DVector::from_fn(50, |i, _| 0.1 * i as f64 - 2.0);
        let y = DVector::from_fn(50, |i, _| (i as f64 * 0.7).cos());
        let xw = quad_solve(&wood, &w, &x, &y, rho, c).unwrap();
        let xp = quad_solve(&primal, &w, &x, &y, rho, c).unwrap();
        assert!((&xw - &xp).norm() <= 1e-9 * xp.norm());
        // direct dense solve as an independent oracle
        let mut m = a.tr_mul(&a);
        for i in 0..50 {
            m[(i, i)] += rho / 2.0 + 1.0 / c;
        }
        let rhs = a.tr_mul(&b) + &w * (rho / 2.0) + &x / c - &y;
        let oracle = m.lu().solve(&rhs).unwrap();
        assert!((&xw - &oracle).norm() <= 1e-9 * oracle.norm());
    }

    #[test]
    fn general_coupling_zeroes_gradient() {
        let a = pseudo(6, 4, 3);
        let b = DVector::from_fn(6, |i, _| i as f64);
        let e = pseudo(5, 4, 9);
        let s = CachedQuadSolver::new(a.clone(), b.clone(), Coupling::Dense(e.clone()), 0.7, 0.3).unwrap();
        assert_eq!(s.mode(), QuadMode::General);
        let t = DVector::from_fn(5, |i, _| 1.0 - i as f64);
        let anchor = DVector::from_element(4, 0.5);
        let x = s
            .solve(&ProxSubproblem {
                alpha: 0.7,
                target: &t,
                tau: 0.3,
                anchor: &anchor,
            })
            .unwrap();
        let grad = a.tr_mul(&(&a * &x - &b)) + e.tr_mul(&(&e * &x - &t)) * 0.7 + (&x - &anchor) * 0.3;
        assert!(grad.norm() <= 1e-9 * (1.0 + x.norm()));
    }

    proptest! {
        #[test]
        fn modes_agree_and_zero_gradient(rows in 1usize..12, cols in 1usize..12, seed in 0u64..1000,
                                         rho in 0.1f64..10.0, c in 0.1f64..10.0) {
            let a = pseudo(rows, cols, seed);
            let b = DVector::from_fn(rows, |i, _| ((i as u64 + seed) % 7) as f64 - 3.0);
            let e = Coupling::neg_identity(cols);
            let wood = CachedQuadSolver::with_mode(a.clone(), b.clone(), e.clone(), rho / 2.0, 1.0 / c, QuadMode::Woodbury).unwrap();
            let primal = CachedQuadSolver::with_mode(a.clone(), b.clone(), e.clone(), rho / 2.0, 1.0 / c, QuadMode::Primal).unwrap();
            let t = DVector::from_fn(cols, |i, _| (i as f64 + seed as f64).sin());
            let anchor = DVector::from_fn(cols, |i, _| (i as f64 * 1.3).cos());
            let sub = ProxSubproblem { alpha: rho / 2.0, target: &t, tau: 1.0 / c, anchor: &anchor };
            let xw = wood.solve(&sub).unwrap();
            let xp = primal.solve(&sub).unwrap();
            prop_assert!((&xw - &xp).norm() <= 1e-9 * (1.0 + xp.norm()));
            let grad = a.tr_mul(&(&a * &xp - &b)) + e.apply_transpose(&(e.apply(&xp) - &t)) * (rho / 2.0)
                + (&xp - &anchor) / c;
            prop_assert!(grad.norm() <= 1e-9 * (1.0 + xp.norm()));
        }
    }
}
