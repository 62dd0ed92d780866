//! Post-hoc checks of recorded runs: monotone step decrease, summability,
//! Fejér monotonicity, the ergodic objective bound, the local linear tail,
//! and KKT residuals.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, IterateState, Problem};
use crate::solvers::min_norm_subgradient;

/// Relative slack of the monotone test.
pub const MONOTONE_SLACK: f64 = 1e-9;
/// Distances below this are ignored by the tail-rate check.
pub const TAIL_FLOOR: f64 = 1e-13;

/// Summary written next to a trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub monotone_ok: bool,
    pub first_violation: Option<usize>,
    pub partial_sums: Vec<f64>,
    /// Medians of `ν a_ν` over the first and last tenth of the run.
    pub nu_a_nu_medians: Option<(f64, f64)>,
    pub fejer_ok: Option<bool>,
    pub ergodic_max_violation: Option<f64>,
    pub tail_ratio_theta: Option<f64>,
}

impl RateReport {
    /// Fields derivable from `a_ν` alone; reference-based fields stay empty.
    pub fn from_deltas(a: &[f64]) -> Self {
        let mono = verify_monotone(a).ok();
        RateReport {
            monotone_ok: mono.as_ref().is_some_and(|m| m.ok),
            first_violation: mono.and_then(|m| m.first_violation),
            partial_sums: partial_sums(a),
            nu_a_nu_medians: decade_medians(a).ok(),
            fejer_ok: None,
            ergodic_max_violation: None,
            tail_ratio_theta: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MonotoneReport {
    pub ok: bool,
    /// 1-based index `ν+1` of the first `a_{ν+1} > a_ν (1 + slack)`.
    pub first_violation: Option<usize>,
}

/// Checks `a_{ν+1} <= a_ν (1 + 1e-9)` along the sequence (index 0 holds `a_1`).
pub fn verify_monotone(a: &[f64]) -> Result<MonotoneReport> {
    if a.len() < 3 {
        return Err(Error::TraceTooShort { needed: 3, got: a.len() });
    }
    let first_violation = a
        .windows(2)
        .position(|w| w[1] > w[0] * (1.0 + MONOTONE_SLACK))
        .map(|i| i + 2);
    Ok(MonotoneReport {
        ok: first_violation.is_none(),
        first_violation,
    })
}

/// Checks that distances to a reference never increase beyond `rel_slack`.
pub fn verify_fejer(dist: &[f64], rel_slack: f64) -> MonotoneReport {
    let first_violation = dist
        .windows(2)
        .position(|w| w[1] > w[0] * (1.0 + rel_slack))
        .map(|i| i + 1);
    MonotoneReport {
        ok: first_violation.is_none(),
        first_violation,
    }
}

pub fn partial_sums(a: &[f64]) -> Vec<f64> {
    a.iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

/// Share of `Σ a_ν` contributed by the last tenth of the sequence.
pub fn tail_share(a: &[f64]) -> Result<f64> {
    let w = decade_len(a.len())?;
    let total: f64 = a.iter().sum();
    let tail: f64 = a[a.len() - w..].iter().sum();
    Ok(if total == 0.0 { 0.0 } else { tail / total })
}

fn decade_len(n: usize) -> Result<usize> {
    if n < 10 {
        return Err(Error::TraceTooShort { needed: 10, got: n });
    }
    Ok(n / 10)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Medians of `ν a_ν` (ν 1-based) over the first and last tenth.
pub fn decade_medians(a: &[f64]) -> Result<(f64, f64)> {
    let w = decade_len(a.len())?;
    let scaled: Vec<f64> = a.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).collect();
    Ok((median(scaled[..w].to_vec()), median(scaled[a.len() - w..].to_vec())))
}

/// Largest `d_{ν+1}/d_ν` over the last `window` fraction of the sequence,
/// skipping pairs with `d_ν < 1e-13`.
pub fn verify_linear_tail(dist: &[f64], window: f64) -> Result<f64> {
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::InvalidParameter(format!("window fraction {window}")));
    }
    let n = dist.len();
    let start = n - ((n as f64 * window).ceil() as usize).min(n);
    let theta = dist[start..]
        .windows(2)
        .filter(|w| w[0] >= TAIL_FLOOR)
        .map(|w| w[1] / w[0])
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))));
    theta.ok_or(Error::EmptyWindow)
}

/// Streaming form of the ergodic check: push `x¹, x², …` in order.
///
/// For each `N` it evaluates `f(x̃_N) + ⟨η̂_1, E x̃_N − q⟩ − f(x̂)` against
/// `||û − u⁰||_G² / N`.
#[derive(Clone, Debug)]
pub struct ErgodicAccumulator<'a> {
    problem: &'a Problem,
    eta_hat: DVector<f64>,
    f_hat: f64,
    rhs_1: f64,
    sum: Vec<DVector<f64>>,
    count: usize,
    max_violation: f64,
}

impl<'a> ErgodicAccumulator<'a> {
    pub fn new(problem: &'a Problem, reference: &IterateState, u0: &IterateState, rho: f64, c: f64) -> Result<Self> {
        problem.check_x(&reference.x)?;
        Ok(ErgodicAccumulator {
            problem,
            eta_hat: reference.eta[0].clone(),
            f_hat: model::objective(&reference.x, problem)?,
            rhs_1: reference.g_dist_sq(u0, rho, c),
            sum: problem.dims().into_iter().map(DVector::zeros).collect(),
            count: 0,
            max_violation: f64::NEG_INFINITY,
        })
    }

    /// Adds the next iterate; returns `(lhs_N, rhs_N)`.
    pub fn push(&mut self, x: &[DVector<f64>]) -> Result<(f64, f64)> {
        self.problem.check_x(x)?;
        for (s, v) in self.sum.iter_mut().zip(x) {
            *s += v;
        }
        self.count += 1;
        let n = self.count as f64;
        let avg: Vec<DVector<f64>> = self.sum.iter().map(|s| s / n).collect();
        let r = model::constraint_residual(&avg, self.problem)?;
        let lhs = model::objective(&avg, self.problem)? + self.eta_hat.dot(&r) - self.f_hat;
        let rhs = self.rhs_1 / n;
        self.max_violation = self.max_violation.max(lhs - rhs);
        Ok((lhs, rhs))
    }

    pub fn max_violation(&self) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::EmptyWindow);
        }
        Ok(self.max_violation)
    }
}

/// Maximum of `lhs_N − rhs_N` over a recorded sequence `x¹ … x^N`.
pub fn verify_ergodic(
    xs: &[Vec<DVector<f64>>],
    reference: Option<&IterateState>,
    u0: &IterateState,
    problem: &Problem,
    rho: f64,
    c: f64,
) -> Result<f64> {
    let reference = reference.ok_or(Error::MissingReference)?;
    let mut acc = ErgodicAccumulator::new(problem, reference, u0, rho, c)?;
    for x in xs {
        acc.push(x)?;
    }
    acc.max_violation()
}

/// `sqrt(Σ_k s_k² + ||Ex − q||²)` with `s_k` the minimal-norm element of
/// `∂f_k(x_k) + E_kᵀy + N_{X_k}(x_k)`.
pub fn kkt_residual(x: &[DVector<f64>], y: &DVector<f64>, problem: &Problem) -> Result<f64> {
    problem.check_x(x)?;
    if y.len() != problem.m() {
        return Err(Error::Dimension(format!("multiplier has {} entries, m = {}", y.len(), problem.m())));
    }
    let mut acc = 0.0;
    for (b, xk) in problem.blocks().iter().zip(x) {
        let g = b.objective.smooth_grad(xk) + b.coupling.apply_transpose(y);
        let s = min_norm_subgradient(xk, &g, b.objective.l1_weight(), &b.feasible);
        acc += s * s;
    }
    acc += model::constraint_residual(x, problem)?.norm_squared();
    Ok(acc.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::generators::build_lasso;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    #[test]
    fn monotone_cases() {
        assert!(verify_monotone(&[1.0; 6]).unwrap().ok);
        let r = verify_monotone(&[4.0, 3.0, 3.5, 1.0]).unwrap();
        assert!(!r.ok);
        assert_eq!(r.first_violation, Some(3));
        assert!(verify_monotone(&[1.0, 0.5]).is_err());
        assert!(verify_monotone(&[1.0, 1.0 + 1e-10, 0.5]).unwrap().ok);
    }

    #[test]
    fn geometric_tail_rate() {
        let d: Vec<f64> = (1..=40).map(|v| 0.5f64.powi(v)).collect();
        assert_relative_eq!(verify_linear_tail(&d, 0.25).unwrap(), 0.5, epsilon = 1e-15);
        assert!(matches!(verify_linear_tail(&[0.0; 10], 0.5), Err(Error::EmptyWindow)));
        assert!(matches!(verify_linear_tail(&[1e-14, 1e-15, 0.0], 1.0), Err(Error::EmptyWindow)));
    }

    #[test]
    fn medians_and_sums() {
        let a: Vec<f64> = (1..=100).map(|v| 1.0 / (v as f64).powi(2)).collect();
        let (first, last) = decade_medians(&a).unwrap();
        // ν a_ν = 1/ν: medians of 1/1..1/10 and 1/91..1/100
        assert_relative_eq!(first, 0.5 * (1.0 / 5.0 + 1.0 / 6.0), epsilon = 1e-15);
        assert_relative_eq!(last, 0.5 * (1.0 / 95.0 + 1.0 / 96.0), epsilon = 1e-15);
        let ps = partial_sums(&a);
        assert!(ps.windows(2).all(|w| w[1] >= w[0]));
        assert!(tail_share(&a).unwrap() < 0.01);
    }

    #[test]
    fn fejer_detects_increase() {
        assert!(verify_fejer(&[3.0, 2.0, 2.0, 1.0], 1e-8).ok);
        assert_eq!(verify_fejer(&[3.0, 2.0, 2.5], 1e-8).first_violation, Some(2));
    }

    fn tiny_lasso(b_zero: bool) -> Problem {
        let a = DMatrix::from_fn(4, 3, |i, j| (i + 2 * j) as f64 * 0.3 - 0.5);
        let b = if b_zero {
            DVector::zeros(4)
        } else {
            DVector::from_vec(vec![1.0, -1.0, 0.5, 2.0])
        };
        build_lasso(a, b, 0.2).unwrap()
    }

    #[test]
    fn kkt_at_origin_with_zero_data() {
        let p = tiny_lasso(true);
        let x = vec![DVector::zeros(3), DVector::zeros(3)];
        assert_eq!(kkt_residual(&x, &DVector::zeros(3), &p).unwrap(), 0.0);
        let xr = vec![DVector::from_vec(vec![0.3, -1.0, 2.0]), DVector::from_vec(vec![1.0, 0.0, 0.0])];
        assert!(kkt_residual(&xr, &DVector::from_vec(vec![0.1, 0.2, 0.3]), &p).unwrap() >= 0.0);
    }

    #[test]
    fn ergodic_rhs_halves_and_optimum_has_zero_lhs() {
        let p = tiny_lasso(true);
        let u0 = IterateState::zeros(&p);
        let mut reference = IterateState::zeros(&p);
        reference.x = vec![DVector::zeros(3), DVector::zeros(3)];
        reference.w[0][0] = 0.5;
        reference.w[1][0] = -0.5;
        let mut acc = ErgodicAccumulator::new(&p, &reference, &u0, 2.0, 1.0).unwrap();
        let (lhs1, rhs1) = acc.push(&reference.x).unwrap();
        let (_, rhs2) = acc.push(&reference.x).unwrap();
        assert_eq!(lhs1, 0.0);
        assert_eq!(rhs2, rhs1 / 2.0);
        assert!(acc.max_violation().unwrap() <= 0.0);
        assert!(matches!(
            verify_ergodic(&[], None, &u0, &p, 2.0, 1.0),
            Err(Error::MissingReference)
        ));
    }

    #[test]
    fn report_serializes_with_fixed_names() {
        let r = RateReport::from_deltas(&[3.0, 2.0, 1.0, 0.5, 0.25, 0.2, 0.1, 0.05, 0.01, 0.001]);
        let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        for key in [
            "monotone_ok",
            "first_violation",
            "partial_sums",
            "nu_a_nu_medians",
            "fejer_ok",
            "ergodic_max_violation",
            "tail_ratio_theta",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["monotone_ok"], true);
    }
}
