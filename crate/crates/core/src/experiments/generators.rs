//! Synthetic instances: lasso, exchange, and logistic-regression consensus.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;

use super::rng;
use crate::error::{Error, Result};
use crate::linalg::{Coupling, DataMatrix};
use crate::model::{BlockSpec, FunctionDescriptor, Problem, SmoothPart};

/// Two-block lasso `½||Ax − b||² + λ||z||₁` s.t. `x − z = 0`.
#[derive(Clone, Debug)]
pub struct LassoInstance {
    pub problem: Problem,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub lambda: f64,
    /// Sparse signal the data was generated from.
    pub x0: DVector<f64>,
}

/// `0.1 ||Aᵀb||_∞`.
pub fn lasso_lambda(a: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    0.1 * a.tr_mul(b).amax()
}

/// Blocks `(½||A·−b||², E = I)` and `(λ||·||₁, E = −I)`, `q = 0`.
pub fn build_lasso(a: DMatrix<f64>, b: DVector<f64>, lambda: f64) -> Result<Problem> {
    let d = a.ncols();
    Problem::new(
        vec![
            BlockSpec::new(
                Coupling::identity(d),
                FunctionDescriptor::smooth(SmoothPart::least_squares(DataMatrix::Dense(a), b)),
            ),
            BlockSpec::new(Coupling::neg_identity(d), FunctionDescriptor::l1(lambda)),
        ],
        DVector::zeros(d),
    )
}

/// Number of nonzeros in the lasso signal: `⌊0.05 d⌋`, at least one.
pub fn lasso_support_size(d: usize) -> usize {
    (d / 20).max(1)
}

/// Gaussian `A` (n×d), sparse Gaussian `x0`, `b = A x0 + ε` with
/// `ε ~ N(0, 1e-3 I)`, `λ = 0.1||Aᵀb||_∞`.
pub fn gen_lasso(n: usize, d: usize, seed: u64) -> Result<LassoInstance> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidParameter(format!("lasso needs n, d >= 1, got {n}, {d}")));
    }
    let mut r = rng::seeded(seed);
    let a = rng::gaussian_matrix(&mut r, n, d);
    let mut support = index::sample(&mut r, d, lasso_support_size(d)).into_vec();
    support.sort_unstable();
    let mut x0 = DVector::zeros(d);
    for &j in &support {
        x0[j] = rng::standard_normal(&mut r);
    }
    let noise_sd = 1e-3f64.sqrt();
    let noise = rng::gaussian_vector(&mut r, n) * noise_sd;
    let b = &a * &x0 + noise;
    let lambda = lasso_lambda(&a, &b);
    let problem = build_lasso(a.clone(), b.clone(), lambda)?;
    Ok(LassoInstance {
        problem,
        a,
        b,
        lambda,
        x0,
    })
}

/// Exchange problem `Σ ½||A_k x_k − b_k||²` s.t. `Σ x_k = 0` with known
/// solution of value 0.
#[derive(Clone, Debug)]
pub struct ExchangeInstance {
    pub problem: Problem,
    pub x_star: Vec<DVector<f64>>,
}

/// `x*_1 … x*_{K−1}` Gaussian, `x*_K = −Σ x*_k`, `A_k` Gaussian p×n,
/// `b_k = A_k x*_k`.
pub fn gen_exchange(k: usize, n: usize, p: usize, seed: u64) -> Result<ExchangeInstance> {
    if k < 2 || n == 0 || p == 0 {
        return Err(Error::InvalidParameter(format!(
            "exchange needs K >= 2 and n, p >= 1, got K={k}, n={n}, p={p}"
        )));
    }
    let mut r = rng::seeded(seed);
    let mut x_star: Vec<DVector<f64>> = (0..k - 1).map(|_| rng::gaussian_vector(&mut r, n)).collect();
    let last = x_star.iter().fold(DVector::zeros(n), |acc, v| acc - v);
    x_star.push(last);
    let blocks = x_star
        .iter()
        .map(|xs| {
            let a = rng::gaussian_matrix(&mut r, p, n);
            let b = &a * xs;
            BlockSpec::new(
                Coupling::identity(n),
                FunctionDescriptor::smooth(SmoothPart::least_squares(DataMatrix::Dense(a), b)),
            )
        })
        .collect();
    Ok(ExchangeInstance {
        problem: Problem::new(blocks, DVector::zeros(n))?,
        x_star,
    })
}

/// Synthetic classification data: Gaussian features and labels drawn from
/// a logistic model around a sparse weight vector (10% nonzeros), so the
/// classes overlap and the unregularized loss has a finite minimizer.
pub fn gen_logreg(n: usize, d: usize, seed: u64) -> Result<(DataMatrix, DVector<f64>)> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidParameter(format!("logreg needs n, d >= 1, got {n}, {d}")));
    }
    let mut r = rng::seeded(seed);
    let a = rng::gaussian_matrix(&mut r, n, d);
    let mut support = index::sample(&mut r, d, (d / 10).max(1)).into_vec();
    support.sort_unstable();
    let mut w = DVector::zeros(d);
    for &j in &support {
        w[j] = rng::standard_normal(&mut r);
    }
    let margins = &a * &w;
    let labels = DVector::from_fn(n, |i, _| {
        let p = 1.0 / (1.0 + (-margins[i]).exp());
        if r.random::<f64>() < p {
            1.0
        } else {
            -1.0
        }
    });
    Ok((DataMatrix::Dense(a), labels))
}

/// Contiguous row blocks; the first `n mod N` blocks get one extra row.
pub fn partition_rows(a: &DataMatrix, b: &DVector<f64>, parts: usize) -> Result<Vec<(DataMatrix, DVector<f64>)>> {
    let n = a.nrows();
    if b.len() != n {
        return Err(Error::Dimension(format!("{n} rows but {} labels", b.len())));
    }
    if parts == 0 || parts > n {
        return Err(Error::InvalidParameter(format!("cannot split {n} rows into {parts} blocks")));
    }
    let (base, extra) = (n / parts, n % parts);
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for i in 0..parts {
        let len = base + usize::from(i < extra);
        out.push((a.slice_rows(start, start + len), b.rows(start, len).into_owned()));
        start += len;
    }
    Ok(out)
}

/// Consensus problem: blocks `i = 1..N` carry the logistic loss of their
/// rows with `E_i` placing `x_i` in the `i`-th chunk of an `N·d` vector;
/// the last block carries `λ||z||₁` with `E = −[I; …; I]`. Together the
/// constraint reads `x_i − z = 0` for every `i`.
pub fn build_logreg_consensus(blocks: Vec<(DataMatrix, DVector<f64>)>, lambda: f64) -> Result<Problem> {
    let parts = blocks.len();
    let d = blocks
        .first()
        .map(|(a, _)| a.ncols())
        .ok_or_else(|| Error::InvalidProblem("no data blocks".into()))?;
    let mut specs = Vec::with_capacity(parts + 1);
    for (i, (a, b)) in blocks.into_iter().enumerate() {
        if a.nrows() == 0 {
            return Err(Error::InvalidProblem(format!("data block {i} is empty")));
        }
        if a.ncols() != d {
            return Err(Error::Dimension(format!("data block {i} has {} columns, expected {d}", a.ncols())));
        }
        specs.push(BlockSpec::new(
            Coupling::Embed {
                rows: parts * d,
                cols: d,
                offset: i * d,
                sign: 1.0,
            },
            FunctionDescriptor::smooth(SmoothPart::logistic(a, b)),
        ));
    }
    specs.push(BlockSpec::new(
        Coupling::Stacked {
            cols: d,
            copies: parts,
            sign: -1.0,
        },
        FunctionDescriptor::l1(lambda),
    ));
    Problem::new(specs, DVector::zeros(parts * d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{constraint_residual, objective};
    use approx::assert_relative_eq;

    #[test]
    fn lambda_on_scalar_data() {
        let a = DMatrix::from_element(1, 1, 1.0);
        let b = DVector::from_element(1, 2.0);
        assert_relative_eq!(lasso_lambda(&a, &b), 0.2, epsilon = 1e-16);
    }

    #[test]
    fn lasso_support_and_determinism() {
        assert_eq!(lasso_support_size(800), 40);
        assert_eq!(lasso_support_size(10), 1);
        let i1 = gen_lasso(30, 800, 3).unwrap();
        assert_eq!(i1.x0.iter().filter(|v| **v != 0.0).count(), 40);
        let i2 = gen_lasso(30, 800, 3).unwrap();
        assert_eq!(i1.a, i2.a);
        assert_eq!(i1.b, i2.b);
        assert_eq!(i1.x0, i2.x0);
        assert_relative_eq!(i1.lambda, 0.1 * i1.a.tr_mul(&i1.b).amax());
    }

    #[test]
    fn exchange_solution_has_zero_value() {
        let inst = gen_exchange(4, 6, 5, 9).unwrap();
        assert_eq!(objective(&inst.x_star, &inst.problem).unwrap(), 0.0);
        assert!(constraint_residual(&inst.x_star, &inst.problem).unwrap().norm() <= 1e-14);
        let small = gen_exchange(2, 1, 3, 2).unwrap();
        assert_eq!(small.x_star[1][0], -small.x_star[0][0]);
        let again = gen_exchange(4, 6, 5, 9).unwrap();
        assert_eq!(inst.x_star, again.x_star);
        assert_eq!(
            inst.problem.block(2).objective.smooth.as_ref().unwrap().a,
            again.problem.block(2).objective.smooth.as_ref().unwrap().a
        );
    }

    #[test]
    fn partition_sizes() {
        let a = DataMatrix::Dense(DMatrix::from_fn(5, 2, |i, j| (i * 2 + j) as f64));
        let b = DVector::from_fn(5, |i, _| i as f64);
        let sizes = |n| -> Vec<usize> { partition_rows(&a, &b, n).unwrap().iter().map(|(m, _)| m.nrows()).collect() };
        assert_eq!(sizes(2), vec![3, 2]);
        assert_eq!(sizes(5), vec![1; 5]);
        assert_eq!(sizes(1), vec![5]);
        assert!(partition_rows(&a, &b, 6).is_err());
        let parts = partition_rows(&a, &b, 3).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (m, l) in &parts {
            let dm = m.to_dense();
            for i in 0..dm.nrows() {
                rows.extend(dm.row(i).iter().copied());
            }
            labels.extend(l.iter().copied());
        }
        assert_eq!(DMatrix::from_row_slice(5, 2, &rows), a.to_dense());
        assert_eq!(DVector::from_vec(labels), b);
    }

    #[test]
    fn consensus_loss_at_origin_is_rows_log2() {
        let (a, b) = gen_logreg(10, 3, 1).unwrap();
        let parts = partition_rows(&a, &b, 3).unwrap();
        let p = build_logreg_consensus(parts, 0.1).unwrap();
        assert_eq!(p.num_blocks(), 4);
        assert_eq!(p.m(), 9);
        let z = DVector::zeros(3);
        assert_relative_eq!(p.block(0).objective.value(&z), 4.0 * 2f64.ln(), epsilon = 1e-14);
        assert_relative_eq!(p.block(2).objective.value(&z), 3.0 * 2f64.ln(), epsilon = 1e-14);
        // x_i = z everywhere is feasible
        let v = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        assert_eq!(constraint_residual(&vec![v; 4], &p).unwrap().norm(), 0.0);
    }

    #[test]
    fn logistic_gradient_matches_central_differences() {
        let (a, b) = gen_logreg(40, 6, 4).unwrap();
        let p = build_logreg_consensus(partition_rows(&a, &b, 2).unwrap(), 0.1).unwrap();
        let mut r = rng::seeded(77);
        for blk in 0..2 {
            let f = &p.block(blk).objective;
            let x = rng::gaussian_vector(&mut r, 6);
            let g = f.smooth_grad(&x);
            for j in 0..6 {
                let h = 1e-6 * (1.0 + x[j].abs());
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd = (f.value(&xp) - f.value(&xm)) / (2.0 * h);
                assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1.0), "{fd} vs {}", g[j]);
            }
        }
    }
}
