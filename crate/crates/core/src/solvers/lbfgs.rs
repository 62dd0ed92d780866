//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! Two-loop recursion for the search direction, initial Hessian scaled by
//! `sᵀy / yᵀy` of the newest pair, and the bracketing/zoom line search of
//! Nocedal & Wright (Algorithms 3.5 and 3.6) with safeguarded cubic
//! interpolation.

use std::collections::VecDeque;

use nalgebra::DVector;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_inner: usize,
    pub max_linesearch: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 10,
            c1: 1e-4,
            c2: 0.9,
            max_inner: 500,
            max_linesearch: 40,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsReport {
    pub x: DVector<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iters: usize,
    pub evals: usize,
    pub converged: bool,
}

/// Minimizes until `||∇f|| <= grad_tol` or `max_inner` iterations.
///
/// `f` writes the gradient into its second argument and returns the value.
/// When the budget runs out the best iterate is returned with
/// `converged = false`.
pub fn lbfgs_minimize<F>(f: F, x0: DVector<f64>, grad_tol: f64, options: &LbfgsOptions) -> LbfgsReport
where
    F: FnMut(&DVector<f64>, &mut DVector<f64>) -> f64,
{
    lbfgs_minimize_until(f, x0, |_, g| g <= grad_tol, options)
}

/// Like [`lbfgs_minimize`] with a caller-supplied acceptance rule on
/// `(x, ||∇f(x)||)`.
pub fn lbfgs_minimize_until<F, A>(mut f: F, x0: DVector<f64>, accept: A, options: &LbfgsOptions) -> LbfgsReport
where
    F: FnMut(&DVector<f64>, &mut DVector<f64>) -> f64,
    A: Fn(&DVector<f64>, f64) -> bool,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = DVector::zeros(n);
    let mut fx = f(&x, &mut g);
    let mut evals = 1;
    let mut gnorm = g.norm();
    let mut pairs: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::with_capacity(options.memory);

    let mut iters = 0;
    while iters < options.max_inner {
        if accept(&x, gnorm) {
            return LbfgsReport {
                x,
                value: fx,
                grad_norm: gnorm,
                iters,
                evals,
                converged: true,
            };
        }
        iters += 1;

        let mut d = direction(&g, &pairs);
        let mut dg = d.dot(&g);
        if !(dg < 0.0) {
            pairs.clear();
            d = -&g;
            dg = -gnorm * gnorm;
        }
        let alpha0 = if pairs.is_empty() { (1.0 / gnorm).min(1.0) } else { 1.0 };

        let step = line_search(&mut f, &x, fx, dg, &d, alpha0, options, &mut evals);
        let (alpha, f_new, g_new) = match step {
            Some(s) => s,
            None if !pairs.is_empty() => {
                // Retry once along steepest descent with fresh memory.
                pairs.clear();
                continue;
            }
            None => break,
        };

        let s = &d * alpha;
        let yv = &g_new - &g;
        let sy = s.dot(&yv);
        x += &s;
        fx = f_new;
        g = g_new;
        gnorm = g.norm();
        if sy > 1e-12 * s.norm() * yv.norm() {
            if pairs.len() == options.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, yv, 1.0 / sy));
        }
    }
    let converged = accept(&x, gnorm);
    LbfgsReport {
        x,
        value: fx,
        grad_norm: gnorm,
        iters,
        evals,
        converged,
    }
}

fn direction(g: &DVector<f64>, pairs: &VecDeque<(DVector<f64>, DVector<f64>, f64)>) -> DVector<f64> {
    let mut q = g.clone();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * s.dot(&q);
        q.axpy(-a, y, 1.0);
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = s.dot(y) / y.norm_squared();
        q *= gamma;
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = rho * y.dot(&q);
        q.axpy(a - b, s, 1.0);
    }
    -q
}

struct Point {
    alpha: f64,
    f: f64,
    dg: f64,
    g: DVector<f64>,
}

#[allow(clippy::too_many_arguments)]
fn line_search<F>(
    f: &mut F,
    x: &DVector<f64>,
    f0: f64,
    dg0: f64,
    d: &DVector<f64>,
    alpha0: f64,
    opt: &LbfgsOptions,
    evals: &mut usize,
) -> Option<(f64, f64, DVector<f64>)>
where
    F: FnMut(&DVector<f64>, &mut DVector<f64>) -> f64,
{
    let mut eval = |alpha: f64, evals: &mut usize| -> Point {
        let xt = x + d * alpha;
        let mut g = DVector::zeros(x.len());
        let fv = f(&xt, &mut g);
        *evals += 1;
        Point {
            alpha,
            f: fv,
            dg: g.dot(d),
            g,
        }
    };
    let armijo = |p: &Point| p.f <= f0 + opt.c1 * p.alpha * dg0;
    let curvature = |p: &Point| p.dg.abs() <= -opt.c2 * dg0;
    let approx = |p: &Point| approx_wolfe(p, f0, dg0, opt);

    let mut prev = Point {
        alpha: 0.0,
        f: f0,
        dg: dg0,
        g: DVector::zeros(0),
    };
    let mut alpha = alpha0;
    let mut budget = opt.max_linesearch;
    let mut first = true;
    while budget > 0 {
        budget -= 1;
        let cur = eval(alpha, evals);
        if !cur.f.is_finite() {
            alpha = 0.5 * (prev.alpha + alpha);
            continue;
        }
        if approx(&cur) {
            return Some((cur.alpha, cur.f, cur.g));
        }
        if !armijo(&cur) || (!first && cur.f >= prev.f) {
            return zoom(&mut eval, prev, cur, f0, dg0, opt, budget, evals);
        }
        if curvature(&cur) {
            return Some((cur.alpha, cur.f, cur.g));
        }
        if cur.dg >= 0.0 {
            return zoom(&mut eval, cur, prev, f0, dg0, opt, budget, evals);
        }
        first = false;
        alpha = 2.0 * cur.alpha;
        prev = cur;
    }
    None
}

/// Approximate Wolfe conditions of Hager and Zhang: near a minimizer the
/// decrease in `f` drops below rounding, so sufficient decrease is checked on
/// the directional derivative instead.
fn approx_wolfe(p: &Point, f0: f64, dg0: f64, opt: &LbfgsOptions) -> bool {
    p.f <= f0 + 1e-10 * f0.abs() && p.dg <= (2.0 * opt.c1 - 1.0) * dg0 && p.dg >= opt.c2 * dg0
}

#[allow(clippy::too_many_arguments)]
fn zoom<E>(
    eval: &mut E,
    mut lo: Point,
    mut hi: Point,
    f0: f64,
    dg0: f64,
    opt: &LbfgsOptions,
    mut budget: usize,
    evals: &mut usize,
) -> Option<(f64, f64, DVector<f64>)>
where
    E: FnMut(f64, &mut usize) -> Point,
{
    while budget > 0 {
        budget -= 1;
        let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
        let width = b - a;
        if width <= 1e-16 * b.max(1e-300) {
            break;
        }
        // Values within rounding of each other carry no information; fall
        // back to the derivatives alone.
        let noise = 1e-10 * f0.abs();
        let flat = (lo.f - hi.f).abs() <= noise;
        let mut trial = if flat && lo.dg * hi.dg < 0.0 {
            lo.alpha - lo.dg * (hi.alpha - lo.alpha) / (hi.dg - lo.dg)
        } else {
            cubic_min(&lo, &hi)
        };
        if !trial.is_finite() || trial < a + 0.1 * width || trial > b - 0.1 * width {
            trial = 0.5 * (a + b);
        }
        let p = eval(trial, evals);
        if approx_wolfe(&p, f0, dg0, opt) {
            return Some((p.alpha, p.f, p.g));
        }
        if flat && (p.f - lo.f).abs() <= noise && lo.dg * hi.dg < 0.0 {
            if p.dg * lo.dg > 0.0 {
                lo = p;
            } else {
                hi = p;
            }
            continue;
        }
        if !(p.f <= f0 + opt.c1 * p.alpha * dg0) || p.f >= lo.f {
            hi = p;
        } else {
            if p.dg.abs() <= -opt.c2 * dg0 {
                return Some((p.alpha, p.f, p.g));
            }
            if p.dg * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = p;
        }
    }
    // Accept the best sufficient-decrease point found, if any.
    if lo.alpha > 0.0 && lo.f < f0 {
        return Some((lo.alpha, lo.f, lo.g));
    }
    None
}

/// Minimizer of the cubic interpolating values and slopes at two points.
fn cubic_min(p: &Point, q: &Point) -> f64 {
    let d1 = p.dg + q.dg - 3.0 * (p.f - q.f) / (p.alpha - q.alpha);
    let disc = d1 * d1 - p.dg * q.dg;
    if disc < 0.0 {
        return f64::NAN;
    }
    let d2 = (q.alpha - p.alpha).signum() * disc.sqrt();
    q.alpha - (q.alpha - p.alpha) * (q.dg + d2 - d1) / (q.dg - p.dg + 2.0 * d2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SmoothPart;
    use crate::linalg::DataMatrix;
    use nalgebra::DMatrix;

    #[test]
    fn quadratic_converges_fast() {
        let n = 20;
        let a = DVector::from_fn(n, |i, _| (i as f64 * 0.37).sin() * 3.0);
        let report = lbfgs_minimize(
            |x: &DVector<f64>, g: &mut DVector<f64>| {
                let d = x - &a;
                g.copy_from(&d);
                0.5 * d.norm_squared()
            },
            DVector::zeros(n),
            1e-10,
            &LbfgsOptions::default(),
        );
        assert!(report.converged);
        assert!(report.grad_norm <= 1e-10);
        assert!(report.iters <= n + 5);
        assert!((&report.x - &a).norm() <= 1e-9);
    }

    #[test]
    fn ill_conditioned_quadratic() {
        let n = 30;
        let diag = DVector::from_fn(n, |i, _| 10f64.powf(i as f64 / 10.0));
        let b = DVector::from_element(n, 1.0);
        let x0 = DVector::zeros(n);
        let f = |x: &DVector<f64>, g: &mut DVector<f64>| {
            let hx = x.component_mul(&diag);
            g.copy_from(&(&hx - &b));
            0.5 * x.dot(&hx) - b.dot(x)
        };
        let mut g0 = DVector::zeros(n);
        let f0 = f(&x0, &mut g0);
        let report = lbfgs_minimize(f, x0, 1e-9, &LbfgsOptions::default());
        assert!(report.converged, "{report:?}");
        assert!(report.value <= f0);
        let exact = b.component_div(&diag);
        assert!((&report.x - &exact).norm() <= 1e-8);
    }

    #[test]
    fn scalar_logistic_matches_bisection() {
        // φ(t) = log(1 + exp(−b a t)) + (σ/2)(t − t0)², one sample, one feature.
        let (a, b, sigma, t0) = (1.7, -1.0, 0.4, 0.8);
        let part = SmoothPart::logistic(DataMatrix::Dense(DMatrix::from_element(1, 1, a)), DVector::from_element(1, b));
        let report = lbfgs_minimize(
            |x: &DVector<f64>, g: &mut DVector<f64>| {
                let (v, grad) = part.value_grad(x);
                g.copy_from(&(grad + (x.add_scalar(-t0)) * sigma));
                v + 0.5 * sigma * (x[0] - t0).powi(2)
            },
            DVector::zeros(1),
            1e-12,
            &LbfgsOptions::default(),
        );
        // stationarity: −b a / (1 + exp(b a t)) + σ(t − t0) = 0, increasing in t
        let deriv = |t: f64| -b * a / (1.0 + (b * a * t).exp()) + sigma * (t - t0);
        let (mut lo, mut hi) = (-100.0, 100.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if deriv(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!((report.x[0] - 0.5 * (lo + hi)).abs() <= 1e-8);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let a = DMatrix::from_fn(7, 4, |i, j| ((i * 5 + j * 3) as f64 * 0.41).sin());
        let labels = DVector::from_fn(7, |i, _| if i % 3 == 0 { -1.0 } else { 1.0 });
        let b = DVector::from_fn(7, |i, _| i as f64 * 0.2 - 0.5);
        for part in [
            SmoothPart::logistic(DataMatrix::Dense(a.clone()), labels),
            SmoothPart::least_squares(DataMatrix::Dense(a.clone()), b),
        ] {
            for s in 0..5 {
                let x = DVector::from_fn(4, |i, _| ((i + 3 * s) as f64 * 1.1).cos() * 2.0);
                let (_, g) = part.value_grad(&x);
                for i in 0..4 {
                    let h = 1e-6 * (1.0 + x[i].abs());
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    let fd = (part.value(&xp) - part.value(&xm)) / (2.0 * h);
                    assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + g[i].abs()), "{fd} vs {}", g[i]);
                }
            }
        }
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let opts = LbfgsOptions {
            max_inner: 2,
            ..LbfgsOptions::default()
        };
        let n = 50;
        let diag = DVector::from_fn(n, |i, _| 1.0 + i as f64 * 10.0);
        let report = lbfgs_minimize(
            |x: &DVector<f64>, g: &mut DVector<f64>| {
                let hx = x.component_mul(&diag);
                g.copy_from(&hx.add_scalar(-1.0));
                0.5 * x.dot(&hx) - x.sum()
            },
            DVector::zeros(n),
            1e-12,
            &opts,
        );
        assert!(!report.converged);
        assert_eq!(report.iters, 2);
    }
}
