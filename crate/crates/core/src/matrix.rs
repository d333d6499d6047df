//! Dense row-major matrices and the factorizations the estimator needs.
//!
//! The workloads here are small-to-moderate (dimensions up to a few
//! thousand, and typically tall skinny `d x p` with `p` in the single
//! digits), so the implementations favor robustness and reproducibility
//! over BLAS-level throughput:
//!
//! - [`qr_orthonormalize`]: Householder QR, returning the thin Q with the
//!   sign convention that the implied R has a positive diagonal,
//! - [`polar_orthonormalize`]: the orthogonal polar factor via SVD,
//! - [`svd`]: one-sided Jacobi (Hestenes) singular value decomposition,
//! - [`sym_eig`]: cyclic Jacobi eigendecomposition for symmetric matrices.
//!
//! Jacobi methods are slower than Golub-Kahan style algorithms but compute
//! small singular values and eigenvalues to high relative accuracy and are
//! deterministic, which the reproducibility contracts elsewhere depend on.
//!
//! Rank decisions use a single relative tolerance, [`RANK_REL_TOL`]: a
//! pivot or singular value below `RANK_REL_TOL * largest` is treated as
//! zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative threshold under which a pivot or singular value counts as zero.
pub const RANK_REL_TOL: f64 = 1e-12;

/// Maximum number of Jacobi sweeps before giving up.
const MAX_SWEEPS: usize = 64;

/// Relative off-diagonal threshold at which Jacobi rotations stop.
const JACOBI_EPS: f64 = 1e-15;

/// Errors surfaced by matrix construction and factorizations.
#[derive(Debug, Error)]
pub enum MatrixError {
    /// Shapes do not line up for the requested operation.
    #[error("dimension mismatch: {0}")]
    BadDims(String),
    /// A NaN or infinity showed up where a finite entry is required.
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    /// The input is numerically rank-deficient (relative tolerance 1e-12).
    #[error("rank-deficient input: {0}")]
    RankDeficient(String),
    /// An iterative factorization did not converge within its sweep budget.
    #[error("no convergence after {0} sweeps")]
    NoConvergence(usize),
    /// A symmetric factorization was asked of an asymmetric matrix.
    #[error("matrix is not symmetric within tolerance")]
    NotSymmetric,
}

/// Dense matrix with row-major storage. All entries are finite: the checked
/// constructors enforce it and every operation preserves it (overflow to
/// infinity is caught by the callers that can produce it).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Zero matrix of the given shape.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Build from a row-major buffer, validating shape and finiteness.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatrixError> {
        if data.len() != rows * cols {
            return Err(MatrixError::BadDims(format!(
                "buffer of length {} cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        for (k, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(MatrixError::NonFinite { row: k / cols.max(1), col: k % cols.max(1) });
            }
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Build from explicit rows, validating rectangularity and finiteness.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MatrixError> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(MatrixError::BadDims("ragged rows".into()));
            }
            data.extend_from_slice(row);
        }
        Matrix::from_vec(r, c, data)
    }

    /// Build by evaluating `f(i, j)` at every position. The closure must
    /// produce finite values; this is for internal construction where that
    /// is known by construction.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row-major view of the underlying buffer.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// True if every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute entry (0 for an empty matrix).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Transposed copy.
    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Matrix product `self * rhs`. Panics on inner-dimension mismatch;
    /// that is a programming error, not an input error.
    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul inner dimensions differ: {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let lhs_row = i * rhs.cols;
                let rhs_row = k * rhs.cols;
                for j in 0..rhs.cols {
                    out.data[lhs_row + j] += a * rhs.data[rhs_row + j];
                }
            }
        }
        out
    }

    /// Entrywise sum `self + rhs`.
    pub fn add(&self, rhs: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "add shape mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    /// Entrywise difference `self - rhs`.
    pub fn sub(&self, rhs: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "sub shape mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    /// Scaled copy `c * self`.
    pub fn scale(&self, c: f64) -> Matrix {
        let data = self.data.iter().map(|a| c * a).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    /// Copy of the half-open block `rows r0..r1, cols c0..c1`.
    pub fn block(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> Matrix {
        assert!(r0 <= r1 && r1 <= self.rows && c0 <= c1 && c1 <= self.cols, "block out of range");
        Matrix::from_fn(r1 - r0, c1 - c0, |i, j| self[(r0 + i, c0 + j)])
    }

    /// Column `j` as a vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Frobenius norm.
    pub fn fro_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Spectral norm (largest singular value), via [`svd`].
    pub fn spectral_norm(&self) -> Result<f64, MatrixError> {
        if self.rows == 0 || self.cols == 0 {
            return Ok(0.0);
        }
        Ok(svd(self)?.singular_values.first().copied().unwrap_or(0.0))
    }

    /// `||self^T self - I||_F`, the departure from orthonormal columns.
    pub fn orthonormality_residual(&self) -> f64 {
        let p = self.cols;
        let mut acc = 0.0;
        for i in 0..p {
            for j in 0..p {
                let mut dot = 0.0;
                for r in 0..self.rows {
                    dot += self[(r, i)] * self[(r, j)];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                acc += (dot - target) * (dot - target);
            }
        }
        acc.sqrt()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Thin singular value decomposition `A = U diag(s) V^T`.
///
/// `u` is `m x k` and `v` is `n x k` with `k = min(m, n)`; both have
/// orthonormal columns and `singular_values` is nonincreasing and
/// nonnegative.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v: Matrix,
}

/// Orthonormalize the columns of a tall matrix by Householder QR.
///
/// Returns the thin Q factor, sign-fixed so that the implied R factor has a
/// strictly positive diagonal; this makes the result unique and makes
/// re-orthonormalizing an exact identity a no-op. Errors with
/// [`MatrixError::RankDeficient`] when any R pivot falls below
/// [`RANK_REL_TOL`] times the largest.
pub fn qr_orthonormalize(a: &Matrix) -> Result<Matrix, MatrixError> {
    let (d, p) = (a.rows, a.cols);
    if d < p || p == 0 {
        return Err(MatrixError::BadDims(format!("qr wants a tall matrix, got {d}x{p}")));
    }
    let mut w = a.clone();
    // Householder vectors, one per column; v[k] lives in rows k..d.
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut vnorm2: Vec<f64> = Vec::with_capacity(p);
    let mut rdiag = vec![0.0; p];

    for k in 0..p {
        let mut nrm2 = 0.0;
        for i in k..d {
            nrm2 += w[(i, k)] * w[(i, k)];
        }
        let nrm = nrm2.sqrt();
        if nrm == 0.0 {
            // Exactly zero pivot column: record it and let the rank check
            // below reject the matrix. The identity reflector keeps the
            // remaining columns untouched.
            vs.push(vec![0.0; d - k]);
            vnorm2.push(0.0);
            rdiag[k] = 0.0;
            continue;
        }
        // Choose the reflection sign away from w[k][k] to avoid cancellation.
        let alpha = if w[(k, k)] >= 0.0 { -nrm } else { nrm };
        let mut v = vec![0.0; d - k];
        v[0] = w[(k, k)] - alpha;
        for i in (k + 1)..d {
            v[i - k] = w[(i, k)];
        }
        let vn2: f64 = v.iter().map(|x| x * x).sum();
        rdiag[k] = alpha;
        // Apply the reflector to the remaining columns.
        for j in (k + 1)..p {
            let mut dot = 0.0;
            for i in k..d {
                dot += v[i - k] * w[(i, j)];
            }
            let coef = 2.0 * dot / vn2;
            for i in k..d {
                w[(i, j)] -= coef * v[i - k];
            }
        }
        vs.push(v);
        vnorm2.push(vn2);
    }

    let max_pivot = rdiag.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    if max_pivot == 0.0 {
        return Err(MatrixError::RankDeficient("all pivots are zero".into()));
    }
    for (k, r) in rdiag.iter().enumerate() {
        if r.abs() < RANK_REL_TOL * max_pivot {
            return Err(MatrixError::RankDeficient(format!(
                "pivot {k} is {:.3e} of the largest",
                r.abs() / max_pivot
            )));
        }
    }

    // Accumulate the thin Q by applying the reflectors, last to first, to
    // the leading columns of the identity.
    let mut q = Matrix::zeros(d, p);
    for j in 0..p {
        q[(j, j)] = 1.0;
    }
    for k in (0..p).rev() {
        let v = &vs[k];
        let vn2 = vnorm2[k];
        if vn2 == 0.0 {
            continue;
        }
        for j in 0..p {
            let mut dot = 0.0;
            for i in k..d {
                dot += v[i - k] * q[(i, j)];
            }
            let coef = 2.0 * dot / vn2;
            for i in k..d {
                q[(i, j)] -= coef * v[i - k];
            }
        }
    }
    // Make the implied R diagonal positive.
    for k in 0..p {
        if rdiag[k] < 0.0 {
            for i in 0..d {
                q[(i, k)] = -q[(i, k)];
            }
        }
    }
    Ok(q)
}

/// Orthonormalize via the polar decomposition: the closest matrix with
/// orthonormal columns in Frobenius distance, `U_svd V^T` from the thin SVD.
///
/// A matrix whose columns are already orthonormal to well below working
/// precision is returned unchanged — the polar factor of an orthonormal
/// matrix is itself, and short-circuiting keeps that case exact.
pub fn polar_orthonormalize(a: &Matrix) -> Result<Matrix, MatrixError> {
    let (d, p) = (a.rows, a.cols);
    if d < p || p == 0 {
        return Err(MatrixError::BadDims(format!("polar wants a tall matrix, got {d}x{p}")));
    }
    if a.orthonormality_residual() <= 1e-13 {
        return Ok(a.clone());
    }
    let f = svd(a)?;
    let smax = f.singular_values[0];
    let smin = *f.singular_values.last().unwrap();
    if smax == 0.0 || smin < RANK_REL_TOL * smax {
        return Err(MatrixError::RankDeficient(format!(
            "smallest singular value is {:.3e} of the largest",
            if smax == 0.0 { 0.0 } else { smin / smax }
        )));
    }
    Ok(f.u.matmul(&f.v.transpose()))
}

/// Thin SVD by one-sided Jacobi rotations.
///
/// Column pairs are rotated until all mutual inner products are negligible
/// relative to the column norms; singular values are the final column
/// norms. Columns belonging to zero singular values are completed to an
/// orthonormal set deterministically.
pub fn svd(a: &Matrix) -> Result<Svd, MatrixError> {
    if a.rows == 0 || a.cols == 0 {
        return Err(MatrixError::BadDims("svd of an empty matrix".into()));
    }
    if a.rows >= a.cols {
        svd_tall(a)
    } else {
        let f = svd_tall(&a.transpose())?;
        Ok(Svd { u: f.v, singular_values: f.singular_values, v: f.u })
    }
}

fn svd_tall(a: &Matrix) -> Result<Svd, MatrixError> {
    let (m, n) = (a.rows, a.cols);
    let mut w = a.clone();
    let mut v = Matrix::identity(n);

    let mut converged = false;
    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n.saturating_sub(1) {
            for j in (i + 1)..n {
                let mut aii = 0.0;
                let mut ajj = 0.0;
                let mut aij = 0.0;
                for r in 0..m {
                    let wi = w[(r, i)];
                    let wj = w[(r, j)];
                    aii += wi * wi;
                    ajj += wj * wj;
                    aij += wi * wj;
                }
                if aii == 0.0 || ajj == 0.0 || aij.abs() <= JACOBI_EPS * (aii * ajj).sqrt() {
                    continue;
                }
                let tau = (ajj - aii) / (2.0 * aij);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for r in 0..m {
                    let wi = w[(r, i)];
                    let wj = w[(r, j)];
                    w[(r, i)] = cs * wi - sn * wj;
                    w[(r, j)] = sn * wi + cs * wj;
                }
                for r in 0..n {
                    let vi = v[(r, i)];
                    let vj = v[(r, j)];
                    v[(r, i)] = cs * vi - sn * vj;
                    v[(r, j)] = sn * vi + cs * vj;
                }
                rotated = true;
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(MatrixError::NoConvergence(MAX_SWEEPS));
    }

    let mut sigma: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|r| w[(r, j)] * w[(r, j)]).sum::<f64>().sqrt())
        .collect();
    // Stable descending order (ties keep their original column order).
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| sigma[y].partial_cmp(&sigma[x]).unwrap());
    let sorted_sigma: Vec<f64> = order.iter().map(|&j| sigma[j]).collect();
    sigma = sorted_sigma;

    let mut u = Matrix::zeros(m, n);
    let mut vs = Matrix::zeros(n, n);
    let smax = sigma[0];
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            vs[(r, dst)] = v[(r, src)];
        }
        if sigma[dst] > smax * 1e-300 && sigma[dst] > 0.0 {
            for r in 0..m {
                u[(r, dst)] = w[(r, src)] / sigma[dst];
            }
        }
    }
    // Zero singular values leave empty U columns; fill them by
    // Gram-Schmidt against the ones already fixed, walking the identity.
    complete_orthonormal_columns(&mut u, &sigma, smax);

    Ok(Svd { u, singular_values: sigma, v: vs })
}

/// Fill columns whose singular value is (numerically) zero with unit
/// vectors orthogonal to all other columns. Deterministic: candidates are
/// the standard basis vectors in order.
fn complete_orthonormal_columns(u: &mut Matrix, sigma: &[f64], smax: f64) {
    let (m, n) = (u.rows, u.cols);
    let needs_fill: Vec<usize> =
        (0..n).filter(|&j| !(sigma[j] > smax * 1e-300 && sigma[j] > 0.0)).collect();
    if needs_fill.is_empty() {
        return;
    }
    let mut candidate = 0;
    for j in needs_fill {
        while candidate < m {
            let mut col = vec![0.0; m];
            col[candidate] = 1.0;
            // Project out every other (already unit) column.
            for k in 0..n {
                if k == j {
                    continue;
                }
                let mut dot = 0.0;
                for r in 0..m {
                    dot += u[(r, k)] * col[r];
                }
                for r in 0..m {
                    col[r] -= dot * u[(r, k)];
                }
            }
            let nrm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            candidate += 1;
            if nrm > 1e-6 {
                for r in 0..m {
                    u[(r, j)] = col[r] / nrm;
                }
                break;
            }
        }
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in nonincreasing order with matching eigenvector
/// columns. The input must be symmetric to within `1e-8` relative in
/// Frobenius norm; it is explicitly symmetrized before iterating so the
/// rotations see an exactly symmetric matrix.
pub fn sym_eig(a: &Matrix) -> Result<(Vec<f64>, Matrix), MatrixError> {
    let n = a.rows;
    if n == 0 || a.cols != n {
        return Err(MatrixError::BadDims(format!("sym_eig wants square, got {}x{}", a.rows, a.cols)));
    }
    let scale = a.fro_norm();
    let asym = a.sub(&a.transpose()).fro_norm();
    if asym > 1e-8 * scale.max(1e-300) {
        return Err(MatrixError::NotSymmetric);
    }
    let mut s = a.add(&a.transpose()).scale(0.5);
    let mut v = Matrix::identity(n);

    let mut converged = false;
    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let spq = s[(p, q)];
                let spp = s[(p, p)];
                let sqq = s[(q, q)];
                if spq.abs() <= JACOBI_EPS * (spp.abs() * sqq.abs()).sqrt().max(scale * 1e-18) {
                    continue;
                }
                let theta = (sqq - spp) / (2.0 * spq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;
                // Update the p/q rows and columns of the symmetric matrix.
                s[(p, p)] = spp - t * spq;
                s[(q, q)] = sqq + t * spq;
                s[(p, q)] = 0.0;
                s[(q, p)] = 0.0;
                for i in 0..n {
                    if i == p || i == q {
                        continue;
                    }
                    let sip = s[(i, p)];
                    let siq = s[(i, q)];
                    s[(i, p)] = c * sip - sn * siq;
                    s[(p, i)] = s[(i, p)];
                    s[(i, q)] = sn * sip + c * siq;
                    s[(q, i)] = s[(i, q)];
                }
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = c * vip - sn * viq;
                    v[(i, q)] = sn * vip + c * viq;
                }
                rotated = true;
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(MatrixError::NoConvergence(MAX_SWEEPS));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| s[(y, y)].partial_cmp(&s[(x, x)]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| s[(i, i)]).collect();
    let vecs = Matrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok((vals, vecs))
}
