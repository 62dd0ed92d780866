//! Matrix representations shared by the problem model and the block solvers.
//!
//! Coupling matrices `E_k` come in a few structured shapes (identity,
//! embedding into a slot of the stacked constraint, replicated identity)
//! that the solvers exploit; anything else is carried densely.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Coupling matrix `E_k` (m rows, n_k columns) of one block.
#[derive(Clone, Debug, PartialEq)]
pub enum Coupling {
    Dense(DMatrix<f64>),
    /// `sign` times the embedding of an n-vector into rows `offset..offset + cols`
    /// of an m-vector. With `offset = 0` and `rows = cols` this is `sign * I`.
    Embed {
        rows: usize,
        cols: usize,
        offset: usize,
        sign: f64,
    },
    /// `sign` times `copies` n×n identities stacked vertically.
    Stacked { cols: usize, copies: usize, sign: f64 },
}

impl Coupling {
    pub fn identity(n: usize) -> Self {
        Coupling::Embed {
            rows: n,
            cols: n,
            offset: 0,
            sign: 1.0,
        }
    }

    pub fn neg_identity(n: usize) -> Self {
        Coupling::Embed {
            rows: n,
            cols: n,
            offset: 0,
            sign: -1.0,
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            Coupling::Dense(e) => e.nrows(),
            Coupling::Embed { rows, .. } => *rows,
            Coupling::Stacked { cols, copies, .. } => cols * copies,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Coupling::Dense(e) => e.ncols(),
            Coupling::Embed { cols, .. } | Coupling::Stacked { cols, .. } => *cols,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match self {
            Coupling::Embed {
                rows,
                cols,
                offset,
                sign,
            } => {
                if offset + cols > *rows {
                    return Err(Error::Dimension(format!(
                        "embedding of {cols} columns at offset {offset} exceeds {rows} rows"
                    )));
                }
                if !sign.is_finite() || *sign == 0.0 {
                    return Err(Error::InvalidParameter("coupling sign must be nonzero".into()));
                }
            }
            Coupling::Stacked { copies, sign, .. } => {
                if *copies == 0 {
                    return Err(Error::Dimension("stacked coupling needs at least one copy".into()));
                }
                if !sign.is_finite() || *sign == 0.0 {
                    return Err(Error::InvalidParameter("coupling sign must be nonzero".into()));
                }
            }
            Coupling::Dense(_) => {}
        }
        Ok(())
    }

    /// `out += scale * E x`.
    pub fn apply_add(&self, x: &DVector<f64>, scale: f64, out: &mut DVector<f64>) {
        match self {
            Coupling::Dense(e) => out.gemv(scale, e, x, 1.0),
            Coupling::Embed { offset, sign, .. } => {
                let s = scale * sign;
                for (i, xi) in x.iter().enumerate() {
                    out[offset + i] += s * xi;
                }
            }
            Coupling::Stacked { cols, copies, sign } => {
                let s = scale * sign;
                for c in 0..*copies {
                    for (i, xi) in x.iter().enumerate() {
                        out[c * cols + i] += s * xi;
                    }
                }
            }
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.rows());
        self.apply_add(x, 1.0, &mut out);
        out
    }

    /// `E^T v`.
    pub fn apply_transpose(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Coupling::Dense(e) => e.tr_mul(v),
            Coupling::Embed {
                cols, offset, sign, ..
            } => DVector::from_fn(*cols, |i, _| sign * v[offset + i]),
            Coupling::Stacked { cols, copies, sign } => DVector::from_fn(*cols, |i, _| {
                let mut acc = 0.0;
                for c in 0..*copies {
                    acc += v[c * cols + i];
                }
                sign * acc
            }),
        }
    }

    /// Returns `s` when `E^T E = s I`.
    pub fn gram_scale(&self) -> Option<f64> {
        match self {
            Coupling::Embed { sign, .. } => Some(sign * sign),
            Coupling::Stacked { copies, sign, .. } => Some(*copies as f64 * sign * sign),
            Coupling::Dense(e) => {
                let g = e.tr_mul(e);
                let n = g.nrows();
                if n == 0 {
                    return None;
                }
                let s = g[(0, 0)];
                let tol = 1e-14 * (1.0 + s.abs());
                for j in 0..n {
                    for i in 0..n {
                        let target = if i == j { s } else { 0.0 };
                        if (g[(i, j)] - target).abs() > tol {
                            return None;
                        }
                    }
                }
                (s > 0.0).then_some(s)
            }
        }
    }

    /// `E^T E` as a dense matrix.
    /// Spectral norm, exact when `EᵀE = sI`, else by power iteration.
    pub fn norm(&self) -> Result<f64> {
        if let Some(s) = self.gram_scale() {
            return Ok(s.sqrt());
        }
        power_iteration(self.cols(), |v| self.apply(v), |u| self.apply_transpose(u), 1e-10, 1000).map(|e| e.value)
    }

    pub fn gram(&self) -> DMatrix<f64> {
        match self {
            Coupling::Dense(e) => e.tr_mul(e),
            _ => {
                let s = self.gram_scale().unwrap_or(0.0);
                DMatrix::from_diagonal_element(self.cols(), self.cols(), s)
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Coupling::Dense(e) => e.clone(),
            _ => {
                let n = self.cols();
                let mut out = DMatrix::zeros(self.rows(), n);
                let mut unit = DVector::zeros(n);
                for j in 0..n {
                    unit[j] = 1.0;
                    let col = self.apply(&unit);
                    out.set_column(j, &col);
                    unit[j] = 0.0;
                }
                out
            }
        }
    }
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists; columns must be strictly
    /// increasing within a row and below `ncols`.
    pub fn from_rows(ncols: usize, rows: &[Vec<(usize, f64)>]) -> Result<Self> {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for (r, row) in rows.iter().enumerate() {
            let mut prev: Option<usize> = None;
            for &(j, v) in row {
                if j >= ncols {
                    return Err(Error::Dimension(format!("row {r}: column {j} >= {ncols}")));
                }
                if prev.is_some_and(|p| j <= p) {
                    return Err(Error::Dimension(format!("row {r}: columns not increasing")));
                }
                prev = Some(j);
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Ok(CsrMatrix {
            nrows: rows.len(),
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[i]..self.indptr[i + 1];
        self.indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// Rows `start..end` as a new matrix with the same column count.
    pub fn slice_rows(&self, start: usize, end: usize) -> CsrMatrix {
        let lo = self.indptr[start];
        let hi = self.indptr[end];
        CsrMatrix {
            nrows: end - start,
            ncols: self.ncols,
            indptr: self.indptr[start..=end].iter().map(|p| p - lo).collect(),
            indices: self.indices[lo..hi].to_vec(),
            values: self.values[lo..hi].to_vec(),
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.nrows, |i, _| self.row(i).map(|(j, v)| v * x[j]).sum())
    }

    pub fn tr_mul_vec(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.ncols);
        for i in 0..self.nrows {
            let yi = y[i];
            if yi != 0.0 {
                for (j, v) in self.row(i) {
                    out[j] += v * yi;
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                out[(i, j)] = v;
            }
        }
        out
    }
}

/// Data matrix `A_k` of a smooth term: dense by default, CSR for LIBSVM data.
#[derive(Clone, Debug, PartialEq)]
pub enum DataMatrix {
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix),
}

impl DataMatrix {
    /// Rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> DataMatrix {
        match self {
            DataMatrix::Dense(a) => DataMatrix::Dense(a.rows(start, end - start).into_owned()),
            DataMatrix::Sparse(a) => DataMatrix::Sparse(a.slice_rows(start, end)),
        }
    }

    pub fn nrows(&self) -> usize {
        match self {
            DataMatrix::Dense(a) => a.nrows(),
            DataMatrix::Sparse(a) => a.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            DataMatrix::Dense(a) => a.ncols(),
            DataMatrix::Sparse(a) => a.ncols(),
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            DataMatrix::Dense(a) => a * x,
            DataMatrix::Sparse(a) => a.mul_vec(x),
        }
    }

    pub fn tr_mul_vec(&self, y: &DVector<f64>) -> DVector<f64> {
        match self {
            DataMatrix::Dense(a) => a.tr_mul(y),
            DataMatrix::Sparse(a) => a.tr_mul_vec(y),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            DataMatrix::Dense(a) => a.clone(),
            DataMatrix::Sparse(a) => a.to_dense(),
        }
    }
}

/// Result of a power iteration.
#[derive(Clone, Copy, Debug)]
pub struct PowerEstimate {
    pub value: f64,
    pub iterations: usize,
}

/// Largest singular value of the linear map `x -> op(x)` (n inputs) whose
/// adjoint is `adj`, by power iteration on `op^T op`.
///
/// Stops when the relative change of the singular-value estimate drops below
/// `rel_tol`. A zero operator returns 0.
pub fn power_iteration<F, G>(n: usize, op: F, adj: G, rel_tol: f64, max_iter: usize) -> Result<PowerEstimate>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    if n == 0 {
        return Ok(PowerEstimate {
            value: 0.0,
            iterations: 0,
        });
    }
    // A fixed, generic start vector keeps the estimate deterministic.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + ((i * 7919) % 101) as f64 / 101.0);
    v /= v.norm();
    let mut prev = 0.0;
    for it in 1..=max_iter {
        let mv = adj(&op(&v));
        let rayleigh = v.dot(&mv).max(0.0);
        let norm = mv.norm();
        if norm == 0.0 {
            return Ok(PowerEstimate {
                value: 0.0,
                iterations: it,
            });
        }
        let sigma = rayleigh.sqrt();
        if it > 1 && (sigma - prev).abs() <= rel_tol * sigma {
            return Ok(PowerEstimate {
                value: sigma,
                iterations: it,
            });
        }
        prev = sigma;
        v = mv / norm;
    }
    let last = adj(&op(&v));
    let sigma = v.dot(&last).max(0.0).sqrt();
    Err(Error::NoConvergence {
        lower: prev.min(sigma),
        upper: prev.max(sigma),
    })
}

pub(crate) fn mean_of(vs: &[DVector<f64>]) -> DVector<f64> {
    let mut acc = DVector::zeros(vs[0].len());
    for v in vs {
        acc += v;
    }
    acc / vs.len() as f64
}

pub(crate) fn stacked_norm_sq(vs: &[DVector<f64>]) -> f64 {
    vs.iter().map(|v| v.norm_squared()).sum()
}

pub(crate) fn stacked_diff_norm_sq(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).norm_squared()).sum()
}
