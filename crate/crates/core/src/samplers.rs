//! Synthetic covariance models and seeded sample streams.
//!
//! A [`CovSpec`] describes a population covariance `Q diag(lambda) Q^T`
//! through its nonincreasing positive spectrum, a target subspace width
//! `p`, an optional orthogonal rotation `Q` (drawn Haar-uniform from a
//! seed), and a sampling family. Every family produces isotropic-in-law
//! coordinates `y` with `E[y y^T] = diag(lambda)`, then rotates:
//!
//! - Gaussian: `y_i = sqrt(lambda_i) * g_i`, standard normal `g`,
//! - Rademacher: `y_i = sqrt(lambda_i) * r_i`, independent signs,
//! - UniformBall: `y = diag(sqrt(lambda)) * sqrt(d) * u` with `u` uniform
//!   on the unit sphere (the `sqrt(d)` makes `E[u u^T] * d = I`).
//!
//! Streams are backed by a counter-based generator (ChaCha12) with one
//! stream id per purpose — 0 for iterate initialization, 1 for samples,
//! 2 for rotation draws — so a single `u64` seed per trial yields
//! independent, replayable randomness for each purpose, and parallel trials
//! are reproducible regardless of scheduling.

use crate::matrix::{self, Matrix};
use crate::stream::SampleSource;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// ChaCha stream id for iterate initialization draws.
pub const STREAM_INIT: u64 = 0;
/// ChaCha stream id for sample draws.
pub const STREAM_SAMPLES: u64 = 1;
/// ChaCha stream id for rotation draws.
pub const STREAM_ROTATION: u64 = 2;

/// Errors from covariance-model construction.
#[derive(Debug, Error)]
pub enum SamplerError {
    /// The spectrum list is empty, unsorted, or has nonpositive entries,
    /// or `p`/`q` are out of range.
    #[error("invalid covariance model: {0}")]
    BadSpec(String),
    /// The requested target has no spectral gap to separate it.
    #[error("gap violation: {0}")]
    GapViolation(String),
}

/// Distribution family for the coordinate draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Gaussian,
    Rademacher,
    UniformBall,
}

/// A population covariance model: spectrum, target width, optional
/// rotation, sampling family, and (for gap-free targets) the relaxed
/// target width `q`.
#[derive(Clone, Debug)]
pub struct CovSpec {
    lambdas: Vec<f64>,
    p: usize,
    q: Option<usize>,
    rotation: Option<Matrix>,
    family: Family,
}

fn validate_spectrum(lambdas: &[f64], p: usize) -> Result<(), SamplerError> {
    let d = lambdas.len();
    if d < 2 {
        return Err(SamplerError::BadSpec("need dimension at least 2".into()));
    }
    if !(1..d).contains(&p) {
        return Err(SamplerError::BadSpec(format!("p={p} must satisfy 1 <= p < d={d}")));
    }
    for (i, l) in lambdas.iter().enumerate() {
        if !(l.is_finite() && *l > 0.0) {
            return Err(SamplerError::BadSpec(format!("lambda[{i}] = {l} is not positive")));
        }
    }
    if lambdas.windows(2).any(|w| w[0] < w[1]) {
        return Err(SamplerError::BadSpec("spectrum must be nonincreasing".into()));
    }
    Ok(())
}

impl CovSpec {
    /// Model with a strict gap at `p`: requires `lambda_p > lambda_{p+1}`.
    pub fn new(
        lambdas: Vec<f64>,
        p: usize,
        family: Family,
        rotation_seed: Option<u64>,
    ) -> Result<Self, SamplerError> {
        validate_spectrum(&lambdas, p)?;
        if lambdas[p - 1] == lambdas[p] {
            return Err(SamplerError::GapViolation(format!(
                "lambda_{p} == lambda_{} with no relaxed target width; use a gap-free model",
                p + 1
            )));
        }
        let rotation = rotation_seed.map(|s| haar_rotation(lambdas.len(), s));
        Ok(CovSpec { lambdas, p, q: None, rotation, family })
    }

    /// Gap-free model: the gap at `p` may vanish, but the relaxed target
    /// width `q` (`p <= q < d`) must satisfy `lambda_p > lambda_{q+1}`.
    pub fn new_gap_free(
        lambdas: Vec<f64>,
        p: usize,
        q: usize,
        family: Family,
        rotation_seed: Option<u64>,
    ) -> Result<Self, SamplerError> {
        validate_spectrum(&lambdas, p)?;
        let d = lambdas.len();
        if !(p..d).contains(&q) {
            return Err(SamplerError::BadSpec(format!("q={q} must satisfy p={p} <= q < d={d}")));
        }
        if lambdas[p - 1] == lambdas[q] {
            return Err(SamplerError::GapViolation(format!(
                "lambda_{p} == lambda_{}; even the relaxed target has no gap",
                q + 1
            )));
        }
        let rotation = rotation_seed.map(|s| haar_rotation(lambdas.len(), s));
        Ok(CovSpec { lambdas, p, q: Some(q), rotation, family })
    }

    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Relaxed target width, present only for gap-free models.
    pub fn q(&self) -> Option<usize> {
        self.q
    }

    /// Effective target width: `q` when present, else `p`.
    pub fn target_width(&self) -> usize {
        self.q.unwrap_or(self.p)
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn rotation(&self) -> Option<&Matrix> {
        self.rotation.as_ref()
    }

    /// Spectral gap at the target: `lambda_p - lambda_{p+1}`.
    pub fn gamma(&self) -> f64 {
        self.lambdas[self.p - 1] - self.lambdas[self.p]
    }

    /// Sum of `lambda_i` over the half-open index range.
    pub fn lambda_sum(&self, range: std::ops::Range<usize>) -> f64 {
        self.lambdas[range].iter().sum()
    }

    /// Tail-to-head energy ratio `sum(lambda_{p+1..d}) / sum(lambda_{1..p})`.
    pub fn nu(&self) -> f64 {
        self.lambda_sum(self.p..self.dim()) / self.lambda_sum(0..self.p)
    }

    /// `max(1, nu)`.
    pub fn nu1(&self) -> f64 {
        self.nu().max(1.0)
    }

    /// Draw one sample into `out` using the provided generator.
    pub fn sample_into(&self, rng: &mut ChaCha12Rng, scratch: &mut [f64], out: &mut [f64]) {
        let d = self.dim();
        debug_assert_eq!(out.len(), d);
        debug_assert_eq!(scratch.len(), d);
        match self.family {
            Family::Gaussian => {
                for (i, y) in scratch.iter_mut().enumerate() {
                    let g: f64 = rng.sample(StandardNormal);
                    *y = self.lambdas[i].sqrt() * g;
                }
            }
            Family::Rademacher => {
                for (i, y) in scratch.iter_mut().enumerate() {
                    let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                    *y = self.lambdas[i].sqrt() * sign;
                }
            }
            Family::UniformBall => {
                let sqrt_d = (d as f64).sqrt();
                loop {
                    let mut norm2 = 0.0;
                    for y in scratch.iter_mut() {
                        let g: f64 = rng.sample(StandardNormal);
                        *y = g;
                        norm2 += g * g;
                    }
                    if norm2 > 1e-24 {
                        let inv = 1.0 / norm2.sqrt();
                        for (i, y) in scratch.iter_mut().enumerate() {
                            *y *= inv * sqrt_d * self.lambdas[i].sqrt();
                        }
                        break;
                    }
                }
            }
        }
        match &self.rotation {
            None => out.copy_from_slice(scratch),
            Some(qm) => {
                for (i, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (j, y) in scratch.iter().enumerate() {
                        acc += qm[(i, j)] * y;
                    }
                    *o = acc;
                }
            }
        }
    }
}

/// Haar-uniform orthogonal matrix from a seed: QR of a square standard
/// Gaussian matrix, with the positive-diagonal sign convention that makes
/// the QR factor Haar distributed.
pub fn haar_rotation(d: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_ROTATION);
    loop {
        let g = Matrix::from_fn(d, d, |_, _| rng.sample(StandardNormal));
        if let Ok(q) = matrix::qr_orthonormalize(&g) {
            return q;
        }
    }
}

/// A seeded, replayable stream of samples from a covariance model.
///
/// Recreating the stream from the same spec and seed replays the same
/// samples; combined with [`crate::stream::skip_samples`] this is what
/// makes checkpoint resumption bit-exact.
pub struct SampleStream {
    spec: CovSpec,
    rng: ChaCha12Rng,
    scratch: Vec<f64>,
    produced: u64,
    limit: Option<u64>,
}

impl SampleStream {
    /// Unbounded stream.
    pub fn new(spec: CovSpec, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(STREAM_SAMPLES);
        let d = spec.dim();
        SampleStream { spec, rng, scratch: vec![0.0; d], produced: 0, limit: None }
    }

    /// Stream that ends after `n` samples.
    pub fn with_limit(spec: CovSpec, seed: u64, n: u64) -> Self {
        let mut s = SampleStream::new(spec, seed);
        s.limit = Some(n);
        s
    }

    pub fn spec(&self) -> &CovSpec {
        &self.spec
    }
}

impl SampleSource for SampleStream {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn next_sample(&mut self, buf: &mut [f64]) -> bool {
        if let Some(limit) = self.limit {
            if self.produced >= limit {
                return false;
            }
        }
        self.spec.sample_into(&mut self.rng, &mut self.scratch, buf);
        self.produced += 1;
        true
    }
}
