//! Distances between subspaces: canonical angles, their sin/tan norms, and
//! chart coordinates relative to a reference subspace.
//!
//! Canonical (principal) angles between the column spans of orthonormal `X`
//! and `Y` are computed from the singular values of `X^T Y`:
//! `theta_j = arccos(sigma_j)`, giving a nondecreasing list in `[0, pi/2]`.
//! Singular values are clamped to `[0, 1]` before the arccos — floating
//! point can overshoot 1 — and values within [`COS_SNAP`] of 1 are snapped
//! to exactly 1. The snap acknowledges the route's conditioning: near
//! `sigma = 1` the angle carries an absolute noise floor of about `1e-8`,
//! so angles below ~`4.5e-7` are indistinguishable from zero and report as
//! zero rather than as rounding noise. A sine-based refinement for tiny
//! angles is deliberately out of scope.
//!
//! Chart coordinates: for a basis `V` (`d x p`, not necessarily
//! orthonormal) whose span is compared against the span of the first `q`
//! coordinate axes (`p <= q < d`), [`chart_coords`] returns
//! `T = V[q..d, :] * inv(V[0..p, :])` — the subspace written as the graph
//! of a linear map over the reference block. For `p = q` the singular
//! values of `T` are exactly the tangents of the canonical angles; for
//! `p < q` they dominate them. `T` depends only on the span of `V`, which
//! is what makes it the right invariant for comparing normalization
//! strategies.

use crate::matrix::{self, Matrix, MatrixError, RANK_REL_TOL};
use thiserror::Error;

/// Absolute tolerance on `||X^T X - I||_F / sqrt(p)` for inputs that must
/// be orthonormal.
pub const ORTH_TOL: f64 = 1e-8;

/// Cosines within this distance of 1 are snapped to exactly 1 (see module
/// docs).
pub const COS_SNAP: f64 = 1e-13;

/// Errors from subspace-distance computations.
#[derive(Debug, Error)]
pub enum SubspaceError {
    /// An input that must have orthonormal columns does not.
    #[error("matrix does not have orthonormal columns (residual {0:.3e})")]
    NotOrthonormal(f64),
    /// The leading `p x p` block is singular, so chart coordinates blow up.
    #[error("leading block is singular; subspace has no chart over the reference")]
    HeadSingular,
    /// Shapes do not line up.
    #[error("dimension mismatch: {0}")]
    BadDims(String),
    /// An underlying factorization failed.
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Which unitarily invariant norm to take over the angle list.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    /// Largest entry (operator norm).
    Spectral,
    /// Square root of the sum of squares.
    Frobenius,
}

/// Canonical angles between two subspaces, nondecreasing in `[0, pi/2]`.
#[derive(Clone, Debug)]
pub struct AngleSet {
    angles: Vec<f64>,
    cosines: Vec<f64>,
}

impl AngleSet {
    /// The angles, nondecreasing.
    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// The largest canonical angle.
    pub fn largest(&self) -> f64 {
        *self.angles.last().expect("angle set is never empty")
    }

    /// Sines of the angles, computed from the cosines as
    /// `sqrt((1 - c)(1 + c))`.
    pub fn sines(&self) -> Vec<f64> {
        self.cosines.iter().map(|c| ((1.0 - c) * (1.0 + c)).sqrt()).collect()
    }

    /// Tangents of the angles; an exact right angle yields `+inf`.
    pub fn tangents(&self) -> Vec<f64> {
        self.cosines
            .iter()
            .map(|&c| {
                let s = ((1.0 - c) * (1.0 + c)).sqrt();
                if c == 0.0 {
                    f64::INFINITY
                } else {
                    s / c
                }
            })
            .collect()
    }
}

fn ensure_orthonormal(m: &Matrix, what: &str) -> Result<(), SubspaceError> {
    let residual = m.orthonormality_residual();
    if residual > ORTH_TOL * (m.cols() as f64).sqrt().max(1.0) {
        return Err(SubspaceError::NotOrthonormal(residual));
    }
    let _ = what;
    Ok(())
}

/// Canonical angles between the spans of orthonormal `x` (`d x p`) and
/// `y` (`d x q`); returns `min(p, q)` angles.
pub fn principal_angles(x: &Matrix, y: &Matrix) -> Result<AngleSet, SubspaceError> {
    if x.rows() != y.rows() {
        return Err(SubspaceError::BadDims(format!(
            "ambient dimensions differ: {} vs {}",
            x.rows(),
            y.rows()
        )));
    }
    if x.cols() == 0 || y.cols() == 0 {
        return Err(SubspaceError::BadDims("empty subspace".into()));
    }
    ensure_orthonormal(x, "x")?;
    ensure_orthonormal(y, "y")?;
    let m = x.transpose().matmul(y);
    let f = matrix::svd(&m)?;
    // Largest min(p, q) singular values are the cosines, descending.
    let mut cosines = f.singular_values;
    cosines.truncate(x.cols().min(y.cols()));
    for c in cosines.iter_mut() {
        *c = c.clamp(0.0, 1.0);
        if *c >= 1.0 - COS_SNAP {
            *c = 1.0;
        }
    }
    let angles: Vec<f64> = cosines.iter().map(|c| c.acos()).collect();
    debug_assert!(angles.windows(2).all(|w| w[0] <= w[1]));
    Ok(AngleSet { angles, cosines })
}

/// `||sin Theta(x, y)||` in the requested norm.
pub fn sin_theta_norm(x: &Matrix, y: &Matrix, kind: NormKind) -> Result<f64, SubspaceError> {
    let sines = principal_angles(x, y)?.sines();
    Ok(match kind {
        NormKind::Spectral => sines.iter().fold(0.0, |a: f64, &b| a.max(b)),
        NormKind::Frobenius => sines.iter().map(|s| s * s).sum::<f64>().sqrt(),
    })
}

/// `||tan Theta(x, y)||` in the requested norm; `+inf` when any angle is a
/// right angle.
pub fn tan_theta_norm(x: &Matrix, y: &Matrix, kind: NormKind) -> Result<f64, SubspaceError> {
    let tangents = principal_angles(x, y)?.tangents();
    Ok(match kind {
        NormKind::Spectral => tangents.iter().fold(0.0, |a: f64, &b| a.max(b)),
        NormKind::Frobenius => tangents.iter().map(|t| t * t).sum::<f64>().sqrt(),
    })
}

/// Chart coordinates of `span(v)` over the first `q` coordinate axes:
/// `T = v[q.., :] * inv(v[..p, :])`, a `(d - q) x p` matrix.
///
/// `v` need not be orthonormal — the result depends only on its span.
/// Requires `1 <= p <= q < d` and a nonsingular leading `p x p` block
/// (smallest singular value at least [`RANK_REL_TOL`] of the largest).
pub fn chart_coords(v: &Matrix, q: usize) -> Result<Matrix, SubspaceError> {
    let (d, p) = (v.rows(), v.cols());
    if p == 0 || p > q || q >= d {
        return Err(SubspaceError::BadDims(format!(
            "chart needs 1 <= p <= q < d, got p={p}, q={q}, d={d}"
        )));
    }
    let head = v.block(0, p, 0, p);
    let f = matrix::svd(&head)?;
    let smax = f.singular_values[0];
    let smin = *f.singular_values.last().unwrap();
    if smax == 0.0 || smin < RANK_REL_TOL * smax {
        return Err(SubspaceError::HeadSingular);
    }
    // head^{-1} = V diag(1/sigma) U^T from the SVD, which stays accurate
    // for mildly ill-conditioned heads.
    let p_rows = p;
    let head_inv = Matrix::from_fn(p_rows, p_rows, |i, j| {
        let mut acc = 0.0;
        for l in 0..p_rows {
            acc += f.v[(i, l)] / f.singular_values[l] * f.u[(j, l)];
        }
        acc
    });
    let tail = v.block(q, d, 0, p);
    Ok(tail.matmul(&head_inv))
}

/// Whether `span(v)` lies within chart radius `kappa` of the span of the
/// first `p` coordinate axes: the smallest singular value of the leading
/// `p x p` block of the orthonormal `v` is at least `1 / sqrt(1 + kappa^2)`
/// (up to a `1e-12` relative slack so exact boundary cases are robust).
/// Equivalent to `||chart_coords(v, p)||_2 <= kappa`.
pub fn in_chart_ball(v: &Matrix, kappa: f64) -> Result<bool, SubspaceError> {
    if kappa.is_nan() || kappa < 0.0 {
        return Err(SubspaceError::BadDims("kappa must be nonnegative".into()));
    }
    ensure_orthonormal(v, "v")?;
    let p = v.cols();
    if p >= v.rows() {
        return Err(SubspaceError::BadDims("v must be strictly tall".into()));
    }
    let head = v.block(0, p, 0, p);
    let f = matrix::svd(&head)?;
    let smin = *f.singular_values.last().unwrap();
    let threshold = 1.0 / (1.0 + kappa * kappa).sqrt();
    Ok(smin >= threshold * (1.0 - 1e-12))
}
