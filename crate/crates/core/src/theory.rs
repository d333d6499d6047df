//! Closed-form rate quantities and the offline baseline.
//!
//! Everything here is a deterministic function of a spectrum and a
//! schedule:
//!
//! * `phi` — the spectrum constant driving the asymptotic error
//!   `phi(Lambda)/n`: `(1/gamma) * sum_{i<=d-p, j<=p}
//!   lambda_{p+i} lambda_j / (lambda_j - lambda_{p+i})`, written with the
//!   positive denominator so the constant is positive, together with its
//!   closed-form upper bound `p (d-p) lambda_p lambda_{p+1} / gamma^2`.
//! * `phi_gap_free` — the same sum truncated below a wider target of width
//!   `q` and normalized by a user-chosen threshold `gamma_tilde` in
//!   `[lambda_p - lambda_q, lambda_p - lambda_{q+1}]`, which stays finite
//!   even when the ordinary eigengap vanishes.
//! * `minimax_lower_bound` — the information-theoretic floor
//!   `c * sigma_*^2 * p (d-q) / n` with effective noise variance
//!   `sigma_*^2 = lambda_p lambda_{q+1} / (lambda_p - lambda_{q+1})^2`.
//! * the entrywise contraction operator `L` with entries
//!   `1 + eta (lambda_{p+i} - lambda_j)`, its norm `1 - eta gamma`, and the
//!   accumulated products `F_*` and `F_{D,i,j}` that control the
//!   deterministic part of the error recursion.
//! * `hadamard_bound_trajectory` — the envelope recursion
//!   `B <- L^2 ∘ B + 2 eta^2 H_scale H` (with `H_ij = lambda_{p+i}
//!   lambda_j`) whose value at step `n` dominates the entrywise second
//!   moment of the chart matrix, up to a remainder reported separately by
//!   [`remainder_term`].
//! * `cold_phase_budget` — the warm-up length
//!   `ceil(C_o (p B^2 / (delta^2 gamma^2)) ln(d B / (delta gamma))^4)`.
//! * `offline_pca` — the batch baseline: top-`p` eigenvectors of the
//!   empirical covariance of `n` samples.

use crate::matrix::{self, Matrix, MatrixError};
use crate::stream::SampleSource;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Schedule;

/// Absolute empirical-eigengap threshold below which the offline baseline
/// flags its answer as degenerate.
pub const DEGENERATE_GAP: f64 = 1e-12;

/// Errors from the theory module.
#[derive(Debug, Error)]
pub enum TheoryError {
    /// A spectrum or argument fails basic validation.
    #[error("bad input: {0}")]
    BadInput(String),
    /// The required eigengap is not positive.
    #[error("gap violation: {0}")]
    GapViolation(String),
    /// A gap-free threshold lies outside its admissible interval.
    #[error("threshold out of range: {0}")]
    ThresholdOutOfRange(String),
    /// `eta * gamma >= 1`: the contraction operator loses its contraction.
    #[error("step too large: eta {eta} times gap {gamma} is not below 1")]
    StepTooLarge { eta: f64, gamma: f64 },
    /// The sample source ended before `n` samples were drawn.
    #[error("sample shortfall: needed {needed}, got {got}")]
    SampleShortfall { needed: u64, got: u64 },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

fn check_spectrum(lambdas: &[f64]) -> Result<(), TheoryError> {
    if lambdas.len() < 2 {
        return Err(TheoryError::BadInput("spectrum needs at least two eigenvalues".into()));
    }
    for (i, l) in lambdas.iter().enumerate() {
        if !(l.is_finite() && *l > 0.0) {
            return Err(TheoryError::BadInput(format!("eigenvalue {i} is {l}")));
        }
    }
    if !lambdas.windows(2).all(|w| w[0] >= w[1]) {
        return Err(TheoryError::BadInput("eigenvalues must be nonincreasing".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Spectrum constants
// ---------------------------------------------------------------------------

/// A rate constant together with its closed-form upper bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiValue {
    pub value: f64,
    pub upper_bound: f64,
}

/// The spectrum constant `phi` and its bound. Requires
/// `lambda_p > lambda_{p+1}`.
pub fn phi(lambdas: &[f64], p: usize) -> Result<PhiValue, TheoryError> {
    check_spectrum(lambdas)?;
    let d = lambdas.len();
    if p == 0 || p >= d {
        return Err(TheoryError::BadInput(format!("need 1 <= p < d, got p={p}, d={d}")));
    }
    let gamma = lambdas[p - 1] - lambdas[p];
    if gamma <= 0.0 {
        return Err(TheoryError::GapViolation(format!(
            "lambda_{p} - lambda_{} = {gamma} must be positive",
            p + 1
        )));
    }
    let mut sum = 0.0;
    for i in 0..d - p {
        for j in 0..p {
            sum += lambdas[p + i] * lambdas[j] / (lambdas[j] - lambdas[p + i]);
        }
    }
    let value = sum / gamma;
    let upper_bound =
        (p * (d - p)) as f64 * lambdas[p - 1] * lambdas[p] / (gamma * gamma);
    Ok(PhiValue { value, upper_bound })
}

/// The gap-free spectrum constant: the tail sum starts below the wider
/// target of width `q` and is normalized by the threshold `gamma_tilde`,
/// which must lie in `[lambda_p - lambda_q, lambda_p - lambda_{q+1}]` and
/// be positive. With `q = p` and `gamma_tilde = gamma` this reproduces
/// [`phi`] exactly, summation order included.
pub fn phi_gap_free(
    lambdas: &[f64],
    p: usize,
    q: usize,
    gamma_tilde: f64,
) -> Result<PhiValue, TheoryError> {
    check_spectrum(lambdas)?;
    let d = lambdas.len();
    if p == 0 || p > q || q >= d {
        return Err(TheoryError::BadInput(format!(
            "need 1 <= p <= q < d, got p={p}, q={q}, d={d}"
        )));
    }
    if lambdas[p - 1] <= lambdas[q] {
        return Err(TheoryError::GapViolation(format!(
            "lambda_{p} - lambda_{} must be positive for a width-{q} target",
            q + 1
        )));
    }
    let lo = lambdas[p - 1] - lambdas[q - 1];
    let hi = lambdas[p - 1] - lambdas[q];
    let slack = 1e-12 * lambdas[0];
    if !(gamma_tilde > 0.0 && gamma_tilde >= lo - slack && gamma_tilde <= hi + slack) {
        return Err(TheoryError::ThresholdOutOfRange(format!(
            "gamma_tilde = {gamma_tilde} must be positive and lie in [{lo}, {hi}]"
        )));
    }
    let mut sum = 0.0;
    for i in 0..d - q {
        for j in 0..p {
            sum += lambdas[q + i] * lambdas[j] / (lambdas[j] - lambdas[q + i]);
        }
    }
    let value = sum / gamma_tilde;
    let upper_bound = (p * (d - q)) as f64 * lambdas[p - 1] * (lambdas[p - 1] - gamma_tilde)
        / (gamma_tilde * gamma_tilde);
    Ok(PhiValue { value, upper_bound })
}

/// The minimax floor for estimating a width-`q` principal subspace from
/// `n` samples, with absolute constant `c` reported rather than assumed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimaxBound {
    pub value: f64,
    /// Effective noise variance
    /// `lambda_p lambda_{q+1} / (lambda_p - lambda_{q+1})^2`.
    pub sigma_star_sq: f64,
}

/// Lower bound `c * sigma_*^2 * p (d-q) / n` on the expected squared
/// subspace error of any estimator.
pub fn minimax_lower_bound(
    lambdas: &[f64],
    p: usize,
    q: usize,
    n: u64,
    c: f64,
) -> Result<MinimaxBound, TheoryError> {
    check_spectrum(lambdas)?;
    let d = lambdas.len();
    if p == 0 || p > q || q >= d {
        return Err(TheoryError::BadInput(format!(
            "need 1 <= p <= q < d, got p={p}, q={q}, d={d}"
        )));
    }
    if n == 0 {
        return Err(TheoryError::BadInput("need n >= 1".into()));
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(TheoryError::BadInput(format!("constant c must be positive, got {c}")));
    }
    let (lp, lq1) = (lambdas[p - 1], lambdas[q]);
    if lp <= lq1 {
        return Err(TheoryError::GapViolation(format!(
            "lambda_{p} = lambda_{} leaves the bound undefined",
            q + 1
        )));
    }
    let sigma_star_sq = lp * lq1 / ((lp - lq1) * (lp - lq1));
    let value = c * sigma_star_sq * (p * (d - q)) as f64 / n as f64;
    Ok(MinimaxBound { value, sigma_star_sq })
}

/// Reporting bundle of every rate constant for one model, ready for the
/// summary output.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateConstants {
    /// Eigengap `lambda_p - lambda_{p+1}` (may be zero in gap-free mode).
    pub gamma: f64,
    /// Gap-free threshold actually used, when the target is wider than `p`.
    pub gamma_tilde: Option<f64>,
    pub phi: f64,
    pub phi_upper: f64,
    pub minimax: f64,
    pub sigma_star_sq: f64,
}

/// Assemble [`RateConstants`] for a width-`q` target at horizon `n`. A
/// wider-than-`p` target requires `gamma_tilde`; for `q = p` the threshold
/// defaults to the eigengap.
pub fn rate_constants(
    lambdas: &[f64],
    p: usize,
    q: usize,
    gamma_tilde: Option<f64>,
    n: u64,
    c: f64,
) -> Result<RateConstants, TheoryError> {
    check_spectrum(lambdas)?;
    let d = lambdas.len();
    if p == 0 || p > q || q >= d {
        return Err(TheoryError::BadInput(format!(
            "need 1 <= p <= q < d, got p={p}, q={q}, d={d}"
        )));
    }
    let gamma = lambdas[p - 1] - lambdas[p];
    let mm = minimax_lower_bound(lambdas, p, q, n, c)?;
    let (phi_v, gamma_tilde) = if q == p && gamma_tilde.is_none() {
        (phi(lambdas, p)?, None)
    } else {
        let gt = gamma_tilde.ok_or_else(|| {
            TheoryError::BadInput("a target wider than p needs gamma_tilde".into())
        })?;
        (phi_gap_free(lambdas, p, q, gt)?, Some(gt))
    };
    Ok(RateConstants {
        gamma,
        gamma_tilde,
        phi: phi_v.value,
        phi_upper: phi_v.upper_bound,
        minimax: mm.value,
        sigma_star_sq: mm.sigma_star_sq,
    })
}

// ---------------------------------------------------------------------------
// The contraction operator and its accumulated products
// ---------------------------------------------------------------------------

fn gap_of(lambdas: &[f64], p: usize) -> Result<f64, TheoryError> {
    check_spectrum(lambdas)?;
    let d = lambdas.len();
    if p == 0 || p >= d {
        return Err(TheoryError::BadInput(format!("need 1 <= p < d, got p={p}, d={d}")));
    }
    let gamma = lambdas[p - 1] - lambdas[p];
    if gamma <= 0.0 {
        return Err(TheoryError::GapViolation(format!(
            "lambda_{p} - lambda_{} = {gamma} must be positive",
            p + 1
        )));
    }
    Ok(gamma)
}

/// Apply the entrywise operator `L`: multiply `T_ij` by
/// `1 + eta (lambda_{p+i} - lambda_j)`. Requires `eta * gamma < 1`.
pub fn l_apply(t: &Matrix, eta: f64, lambdas: &[f64], p: usize) -> Result<Matrix, TheoryError> {
    let gamma = gap_of(lambdas, p)?;
    let d = lambdas.len();
    if t.rows() != d - p || t.cols() != p {
        return Err(TheoryError::BadInput(format!(
            "operator input must be {}x{p}, got {}x{}",
            d - p,
            t.rows(),
            t.cols()
        )));
    }
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(TheoryError::BadInput(format!("rate must be finite and nonnegative, got {eta}")));
    }
    if eta * gamma >= 1.0 {
        return Err(TheoryError::StepTooLarge { eta, gamma });
    }
    Ok(Matrix::from_fn(d - p, p, |i, j| {
        (1.0 + eta * (lambdas[p + i] - lambdas[j])) * t[(i, j)]
    }))
}

/// Norm of the operator `L` as a contraction on charts: `1 - eta gamma`.
pub fn l_norm(eta: f64, lambdas: &[f64], p: usize) -> Result<f64, TheoryError> {
    let gamma = gap_of(lambdas, p)?;
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(TheoryError::BadInput(format!("rate must be finite and nonnegative, got {eta}")));
    }
    if eta * gamma >= 1.0 {
        return Err(TheoryError::StepTooLarge { eta, gamma });
    }
    Ok(1.0 - eta * gamma)
}

/// Accumulated contraction `F_*(n', n) = prod_{r=n'..n} (1 - eta_r gamma)`,
/// an empty product (`n' > n`) being 1. `gamma` is the contraction
/// coefficient, not necessarily the schedule's own reference gap.
pub fn f_star(schedule: &Schedule, gamma: f64, n_prime: u64, n: u64) -> f64 {
    debug_assert!(n_prime >= 1, "steps are 1-based");
    let mut prod = 1.0;
    for r in n_prime..=n {
        prod *= 1.0 - schedule.rate(r) * gamma;
    }
    prod
}

/// Accumulated drive
/// `F_{D,i,j}(n', n) = sum_{s=n'..n} eta_s^i prod_{r=s+1..n} (1 - eta_r gamma)^j`,
/// evaluated backward so each tail product is formed once.
pub fn f_d(schedule: &Schedule, gamma: f64, i: u32, j: u32, n_prime: u64, n: u64) -> f64 {
    debug_assert!(n_prime >= 1, "steps are 1-based");
    let mut acc = 0.0;
    let mut tail = 1.0;
    let mut s = n;
    while s >= n_prime && s >= 1 {
        let eta = schedule.rate(s);
        acc += eta.powi(i as i32) * tail;
        tail *= (1.0 - eta * gamma).powi(j as i32);
        if s == 1 {
            break;
        }
        s -= 1;
    }
    acc
}

/// The envelope recursion `B <- L_s^2 ∘ B + 2 eta_s^2 H_scale H` run for
/// `n` steps from `B = T0 ∘ T0`, where `H_ij = lambda_{p+i} lambda_j`. The
/// result dominates the entrywise second moment of the chart matrix for
/// iterates that stay in the chart ball; the stochastic remainder on top of
/// it is [`remainder_term`]. Rates are used exactly as the schedule
/// produces them.
pub fn hadamard_bound_trajectory(
    lambdas: &[f64],
    p: usize,
    schedule: &Schedule,
    h_scale: f64,
    n: u64,
    t0: &Matrix,
) -> Result<Matrix, TheoryError> {
    let _ = gap_of(lambdas, p)?;
    let d = lambdas.len();
    if t0.rows() != d - p || t0.cols() != p {
        return Err(TheoryError::BadInput(format!(
            "initial chart must be {}x{p}, got {}x{}",
            d - p,
            t0.rows(),
            t0.cols()
        )));
    }
    if !(h_scale.is_finite() && h_scale >= 0.0) {
        return Err(TheoryError::BadInput(format!("h_scale must be nonnegative, got {h_scale}")));
    }
    let mut b = Matrix::from_fn(d - p, p, |i, j| t0[(i, j)] * t0[(i, j)]);
    for s in 1..=n {
        let eta = schedule.rate(s);
        let drive = 2.0 * eta * eta * h_scale;
        for i in 0..d - p {
            for j in 0..p {
                let l = 1.0 + eta * (lambdas[p + i] - lambdas[j]);
                b[(i, j)] = l * l * b[(i, j)] + drive * lambdas[p + i] * lambdas[j];
            }
        }
    }
    Ok(b)
}

/// The stochastic remainder `C_R epsilon^2 / ln(n d / delta_1)` reported
/// alongside the envelope (never folded into it).
pub fn remainder_term(c_r: f64, epsilon: f64, n: u64, d: usize, delta_1: f64) -> f64 {
    c_r * epsilon * epsilon / ((n as f64 * d as f64 / delta_1).ln())
}

/// Warm-up budget `ceil(C_o (p B^2 / (delta^2 gamma^2))
/// ln(d B / (delta gamma))^4)`: the number of flat-rate steps that drive a
/// random initial guess into the unit chart ball with probability
/// `1 - delta`.
pub fn cold_phase_budget(
    p: usize,
    b: f64,
    delta: f64,
    gamma: f64,
    d: usize,
    c_o: f64,
) -> Result<u64, TheoryError> {
    if p == 0 || d < 2 {
        return Err(TheoryError::BadInput(format!("need p >= 1 and d >= 2, got p={p}, d={d}")));
    }
    if !(b.is_finite() && b > 0.0 && gamma.is_finite() && gamma > 0.0) {
        return Err(TheoryError::BadInput(format!("need positive B and gamma, got B={b}, gamma={gamma}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(TheoryError::BadInput(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(c_o.is_finite() && c_o > 0.0) {
        return Err(TheoryError::BadInput(format!("C_o must be positive, got {c_o}")));
    }
    let log_arg = d as f64 * b / (delta * gamma);
    if log_arg <= 1.0 {
        return Err(TheoryError::BadInput(format!(
            "d B / (delta gamma) = {log_arg} must exceed 1"
        )));
    }
    let value = c_o * (p as f64 * b * b / (delta * delta * gamma * gamma)) * log_arg.ln().powi(4);
    if !value.is_finite() {
        return Err(TheoryError::BadInput("warm-up budget overflowed".into()));
    }
    Ok(value.ceil() as u64)
}

// ---------------------------------------------------------------------------
// Offline baseline
// ---------------------------------------------------------------------------

/// The batch estimate: top-`p` eigenvectors of the empirical covariance.
#[derive(Clone, Debug)]
pub struct OfflinePca {
    /// `d x p` orthonormal, columns ordered by descending eigenvalue; each
    /// column's largest-magnitude entry is made positive for reproducible
    /// records.
    pub basis: Matrix,
    /// All `d` empirical eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// True when the empirical gap `lambda_p - lambda_{p+1}` falls below
    /// [`DEGENERATE_GAP`]: the returned span is then unstable.
    pub degenerate_spectrum: bool,
}

/// Batch PCA over the next `n` samples of `source`.
pub fn offline_pca(
    source: &mut dyn SampleSource,
    n: u64,
    p: usize,
) -> Result<OfflinePca, TheoryError> {
    let d = source.dim();
    if n == 0 {
        return Err(TheoryError::BadInput("offline baseline needs at least one sample".into()));
    }
    if p == 0 || p >= d {
        return Err(TheoryError::BadInput(format!("need 1 <= p < d, got p={p}, d={d}")));
    }
    let mut s = Matrix::zeros(d, d);
    let mut x = vec![0.0; d];
    for got in 0..n {
        if !source.next_sample(&mut x) {
            return Err(TheoryError::SampleShortfall { needed: n, got });
        }
        for i in 0..d {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for j in i..d {
                s[(i, j)] += xi * x[j];
            }
        }
    }
    let scale = 1.0 / n as f64;
    for i in 0..d {
        for j in i..d {
            let v = s[(i, j)] * scale;
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    let (vals, vecs) = matrix::sym_eig(&s)?;
    let mut basis = vecs.block(0, d, 0, p);
    for j in 0..p {
        let mut best = 0;
        let mut best_abs = 0.0;
        for i in 0..d {
            let a = basis[(i, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if basis[(best, j)] < 0.0 {
            for i in 0..d {
                basis[(i, j)] = -basis[(i, j)];
            }
        }
    }
    let degenerate_spectrum = vals[p - 1] - vals[p] < DEGENERATE_GAP;
    Ok(OfflinePca { basis, eigenvalues: vals, degenerate_spectrum })
}
