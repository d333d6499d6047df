//! The streaming subspace estimator: a rank-`p` iterate updated one sample
//! at a time.
//!
//! Each step applies the multiplicative update `U <- (I + eta x x^T) U`
//! (computed as `U + eta x (U^T x)^T`) followed by a normalization policy
//! that restores orthonormal columns: immediately via QR or the polar
//! factor, or lazily every `period` steps ([`Normalizer::Deferred`]) with a
//! conditioning guard that normalizes early if the columns drift too far
//! from orthonormal. The span of the iterate — the only thing the estimate
//! means — is identical under every policy; the policies differ only in
//! cost and in which basis represents that span.
//!
//! [`run`] drives a whole trajectory from a [`SampleSource`] under a
//! learning-rate [`Schedule`], recording subspace errors against a known
//! target at requested checkpoint steps and optionally tracking region
//! diagnostics (when does the iterate leave a chart ball, when does it
//! enter a target ball, when does a sample exceed its sub-Gaussian-style
//! bound). Runs are deterministic given the state, source, and
//! configuration, and can be checkpointed to disk and resumed bit-exactly
//! against a replayable source.

use crate::matrix::{self, Matrix, MatrixError};
use crate::stream::SampleSource;
use crate::subspace::{self, NormKind, SubspaceError};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Frobenius drift of `U^T U` from the identity at which a deferred
/// normalizer re-orthonormalizes early.
pub const DEFERRED_DRIFT_GUARD: f64 = 0.1;

/// Errors from the engine.
#[derive(Debug, Error)]
pub enum EngineError {
    /// Invalid dimensions, schedule constants, or run configuration.
    #[error("bad configuration: {0}")]
    BadConfig(String),
    /// A sample or an update overflowed to a non-finite value.
    #[error("non-finite value at step {step}")]
    NonFinite { step: u64 },
    /// The sample source ended before the requested horizon.
    #[error("stream exhausted after {got} of {needed} samples")]
    StreamExhausted { needed: u64, got: u64 },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Subspace(#[from] SubspaceError),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint encoding: {0}")]
    Codec(#[from] serde_json::Error),
}

// ---------------------------------------------------------------------------
// Learning-rate schedules
// ---------------------------------------------------------------------------

/// Learning-rate schedule `n -> eta_n` (steps are 1-based).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Schedule {
    /// Fixed rate `eta`.
    Constant { eta: f64 },
    /// Decaying rate `c_eta / (gamma_ref * n)`, where `gamma_ref` is the
    /// spectral gap the schedule is normalized by.
    Harmonic { c_eta: f64, gamma_ref: f64 },
    /// Flat warm-up for `n_o` steps at `c_o_prime * ln(dim/delta) /
    /// (gamma_ref * n_o)`, then the harmonic decay `c_eta / (gamma_ref * n)`.
    TwoPhase { n_o: u64, c_o_prime: f64, c_eta: f64, gamma_ref: f64, dim: usize, delta: f64 },
}

impl Schedule {
    /// Validated constant schedule.
    pub fn constant(eta: f64) -> Result<Self, EngineError> {
        let s = Schedule::Constant { eta };
        s.validate()?;
        Ok(s)
    }

    /// Validated harmonic schedule.
    pub fn harmonic(c_eta: f64, gamma_ref: f64) -> Result<Self, EngineError> {
        let s = Schedule::Harmonic { c_eta, gamma_ref };
        s.validate()?;
        Ok(s)
    }

    /// Validated two-phase schedule.
    pub fn two_phase(
        n_o: u64,
        c_o_prime: f64,
        c_eta: f64,
        gamma_ref: f64,
        dim: usize,
        delta: f64,
    ) -> Result<Self, EngineError> {
        let s = Schedule::TwoPhase { n_o, c_o_prime, c_eta, gamma_ref, dim, delta };
        s.validate()?;
        Ok(s)
    }

    /// Check the constants; every schedule must produce strictly positive
    /// finite rates, and the two-phase decay constant must be at least 1.
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |msg: String| Err(EngineError::BadConfig(msg));
        match *self {
            Schedule::Constant { eta } => {
                if !(eta.is_finite() && eta > 0.0) {
                    return bad(format!("constant rate must be positive, got {eta}"));
                }
            }
            Schedule::Harmonic { c_eta, gamma_ref } => {
                if !(c_eta.is_finite() && c_eta > 0.0) {
                    return bad(format!("c_eta must be positive, got {c_eta}"));
                }
                if !(gamma_ref.is_finite() && gamma_ref > 0.0) {
                    return bad(format!("gamma_ref must be positive, got {gamma_ref}"));
                }
            }
            Schedule::TwoPhase { n_o, c_o_prime, c_eta, gamma_ref, dim, delta } => {
                if n_o == 0 {
                    return bad("warm-up length n_o must be at least 1".into());
                }
                if !(c_o_prime.is_finite() && c_o_prime > 0.0) {
                    return bad(format!("c_o_prime must be positive, got {c_o_prime}"));
                }
                if !(c_eta.is_finite() && c_eta >= 1.0) {
                    return bad(format!("two-phase c_eta must be at least 1, got {c_eta}"));
                }
                if !(gamma_ref.is_finite() && gamma_ref > 0.0) {
                    return bad(format!("gamma_ref must be positive, got {gamma_ref}"));
                }
                if dim < 2 {
                    return bad(format!("dim must be at least 2, got {dim}"));
                }
                if !(delta.is_finite() && delta > 0.0 && delta < 1.0) {
                    return bad(format!("delta must lie in (0, 1), got {delta}"));
                }
            }
        }
        Ok(())
    }

    /// Rate for step `n >= 1`.
    pub fn rate(&self, n: u64) -> f64 {
        debug_assert!(n >= 1, "steps are 1-based");
        match *self {
            Schedule::Constant { eta } => eta,
            Schedule::Harmonic { c_eta, gamma_ref } => c_eta / (gamma_ref * n as f64),
            Schedule::TwoPhase { n_o, c_o_prime, c_eta, gamma_ref, dim, delta } => {
                if n <= n_o {
                    c_o_prime * (dim as f64 / delta).ln() / (gamma_ref * n_o as f64)
                } else {
                    c_eta / (gamma_ref * n as f64)
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Normalization policies
// ---------------------------------------------------------------------------

/// How (and when) the iterate's columns are restored to orthonormal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Normalizer {
    /// Householder QR after every step.
    Qr,
    /// Polar factor after every step.
    Polar,
    /// QR every `period` steps (and at the end of a run), with an early
    /// re-orthonormalization whenever `||U^T U - I||_F` exceeds
    /// [`DEFERRED_DRIFT_GUARD`].
    Deferred { period: u32 },
}

impl Normalizer {
    pub fn validate(&self) -> Result<(), EngineError> {
        if let Normalizer::Deferred { period: 0 } = self {
            return Err(EngineError::BadConfig("deferred period must be at least 1".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Iterate state and the single-step update
// ---------------------------------------------------------------------------

/// The estimator state: the current basis, how many samples it has
/// absorbed, and (for deferred normalization) how stale the basis is.
#[derive(Clone, Debug)]
pub struct OjaState {
    u: Matrix,
    n: u64,
    steps_since_norm: u32,
}

impl OjaState {
    /// Current basis (`d x p`; orthonormal except possibly between
    /// deferred normalizations).
    pub fn basis(&self) -> &Matrix {
        &self.u
    }

    /// Number of samples absorbed so far.
    pub fn step_count(&self) -> u64 {
        self.n
    }

    /// Whether the basis is freshly normalized. Always true under the
    /// immediate policies; under a deferred policy, false between
    /// normalizations.
    pub fn is_normalized(&self) -> bool {
        self.steps_since_norm == 0
    }

    /// Rebuild a state from persisted parts. The basis must be orthonormal
    /// (checkpoints are only written at normalized steps).
    pub fn from_parts(u: Matrix, n: u64) -> Result<Self, EngineError> {
        let p = u.cols();
        if p == 0 || p >= u.rows() {
            return Err(EngineError::BadConfig(format!(
                "basis must be strictly tall, got {}x{p}",
                u.rows()
            )));
        }
        let residual = u.orthonormality_residual();
        if residual > 1e-8 * (p as f64).sqrt().max(1.0) {
            return Err(EngineError::BadConfig(format!(
                "persisted basis is not orthonormal (residual {residual:.3e})"
            )));
        }
        Ok(OjaState { u, n, steps_since_norm: 0 })
    }
}

/// Random initial state: a `d x p` standard Gaussian matrix drawn from the
/// seed (ChaCha stream [`crate::samplers::STREAM_INIT`]), orthonormalized.
/// The same `(d, p, seed)` always yields the same state.
pub fn init_state(d: usize, p: usize, seed: u64) -> Result<OjaState, EngineError> {
    if p == 0 || p >= d {
        return Err(EngineError::BadConfig(format!("need 1 <= p < d, got p={p}, d={d}")));
    }
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(crate::samplers::STREAM_INIT);
    loop {
        let g = Matrix::from_fn(d, p, |_, _| rng.sample(rand_distr::StandardNormal));
        match matrix::qr_orthonormalize(&g) {
            Ok(u) => return Ok(OjaState { u, n: 0, steps_since_norm: 0 }),
            // A singular Gaussian draw has probability zero but a redraw is
            // still the right response.
            Err(MatrixError::RankDeficient(_)) => continue,
            Err(e) => return Err(e.into()),
        }
    }
}

/// Advance the state by one sample at rate `eta`.
///
/// An update that is exactly zero (zero rate, or a sample orthogonal to the
/// current span) leaves an immediately-normalized basis bitwise unchanged;
/// only a deferred policy still honors its period boundary.
pub fn step(
    state: &mut OjaState,
    x: &[f64],
    eta: f64,
    normalizer: Normalizer,
) -> Result<(), EngineError> {
    let (d, p) = (state.u.rows(), state.u.cols());
    if x.len() != d {
        return Err(EngineError::BadConfig(format!(
            "sample has dimension {}, state expects {d}",
            x.len()
        )));
    }
    let this_step = state.n + 1;
    if !eta.is_finite() || eta < 0.0 {
        return Err(EngineError::BadConfig(format!("rate at step {this_step} is {eta}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(EngineError::NonFinite { step: this_step });
    }

    // z = U^T x, then U <- U + eta * x z^T.
    let u = &mut state.u;
    let mut z = vec![0.0; p];
    for i in 0..d {
        let xi = x[i];
        if xi == 0.0 {
            continue;
        }
        for (j, zj) in z.iter_mut().enumerate() {
            *zj += u[(i, j)] * xi;
        }
    }
    let zero_update = eta == 0.0 || z.iter().all(|&v| v == 0.0);
    if !zero_update {
        for i in 0..d {
            let c = eta * x[i];
            if c == 0.0 {
                continue;
            }
            for (j, zj) in z.iter().enumerate() {
                u[(i, j)] += c * zj;
            }
        }
        if !u.is_finite() {
            return Err(EngineError::NonFinite { step: this_step });
        }
    }

    match normalizer {
        Normalizer::Qr => {
            if !zero_update {
                state.u = matrix::qr_orthonormalize(&state.u)?;
            }
        }
        Normalizer::Polar => {
            if !zero_update {
                state.u = matrix::polar_orthonormalize(&state.u)?;
            }
        }
        Normalizer::Deferred { period } => {
            state.steps_since_norm += 1;
            let due = state.steps_since_norm >= period
                || state.u.orthonormality_residual() > DEFERRED_DRIFT_GUARD;
            if due {
                state.u = matrix::qr_orthonormalize(&state.u)?;
                state.steps_since_norm = 0;
            }
        }
    }
    state.n = this_step;
    Ok(())
}

// ---------------------------------------------------------------------------
// Error measurement against a known target
// ---------------------------------------------------------------------------

/// Ground-truth description for error recording: the eigenbasis rotation of
/// the sampling covariance (identity when `None`) and the target width `q`
/// (`q = p` for the usual gapped target, `q > p` for gap-free targets).
#[derive(Clone, Debug)]
pub struct Measurement {
    pub rotation: Option<Matrix>,
    pub target_width: usize,
}

/// Per-step region diagnostics: chart-ball radii, the sample-magnitude
/// factor `mu`, and the spectrum the magnitude bounds are scaled by. The
/// rotation must match the sampler's.
#[derive(Clone, Debug)]
pub struct DiagnosticsSpec {
    pub rotation: Option<Matrix>,
    /// Leaving the chart ball of this radius sets the first-exit time.
    pub kappa: f64,
    /// Entering the chart ball of this radius sets the first-entry time.
    pub entry_radius: f64,
    /// Sample bound factor: coordinate `i` must stay within
    /// `sqrt(lambda_i * mu)` and the projected sample within
    /// `sqrt(sum(lambda_1..p) * mu)`.
    pub mu: f64,
    pub lambdas: Vec<f64>,
}

/// Everything recorded at one checkpoint. Missing measurements are NaN
/// (serialized downstream as empty/null); an unreachable tangent is `+inf`.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub n: u64,
    /// Squared Frobenius sine error vs. the target.
    pub sin2_f: f64,
    /// Frobenius tangent error vs. the target.
    pub tan_f: f64,
    /// Spectral tangent error vs. the target.
    pub tan_2: f64,
    /// `||T_q||_F` for gap-free targets (NaN for `q = p` runs).
    pub chart_tail_f: f64,
    /// The chart matrix itself, when capture was requested and it exists.
    pub chart: Option<Matrix>,
    /// Whether the iterate is inside the `kappa` chart ball right now.
    pub in_ball: Option<bool>,
    /// Whether the iterate has left the `kappa` ball at some step `<= n`.
    pub escaped_by_now: Option<bool>,
    /// Whether some sample at step `<= n` violated its magnitude bound.
    pub bound_violated_by_now: Option<bool>,
}

/// First-hitting summary of a run's diagnostics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HittingTimes {
    /// First step (0-based state index) outside the `kappa` chart ball.
    pub first_exit: Option<u64>,
    /// First step inside the `entry_radius` chart ball.
    pub first_entry: Option<u64>,
    /// First step whose sample violated the magnitude bounds.
    pub first_bound_violation: Option<u64>,
}

impl HittingTimes {
    /// Elementwise-earliest combination of two summaries. Joining a saved
    /// run's history with a resumed segment keeps the first occurrence of
    /// each event across the whole trajectory.
    pub fn merged(self, other: HittingTimes) -> HittingTimes {
        fn earlier(a: Option<u64>, b: Option<u64>) -> Option<u64> {
            match (a, b) {
                (Some(x), Some(y)) => Some(x.min(y)),
                (x, y) => x.or(y),
            }
        }
        HittingTimes {
            first_exit: earlier(self.first_exit, other.first_exit),
            first_entry: earlier(self.first_entry, other.first_entry),
            first_bound_violation: earlier(
                self.first_bound_violation,
                other.first_bound_violation,
            ),
        }
    }
}

/// Run configuration: schedule, normalization, horizon, checkpoint steps
/// (strictly increasing, each `<= n_steps`; step 0 records the initial
/// state), optional measurement and diagnostics, and whether to keep the
/// chart matrix at checkpoints.
pub struct RunConfig<'a> {
    pub schedule: &'a Schedule,
    pub normalizer: Normalizer,
    pub n_steps: u64,
    pub checkpoints: &'a [u64],
    pub measure: Option<&'a Measurement>,
    pub diagnostics: Option<&'a DiagnosticsSpec>,
    pub capture_chart: bool,
}

/// A finished run: final state, checkpoint records, hitting times.
pub struct RunOutput {
    pub state: OjaState,
    pub records: Vec<StepRecord>,
    pub hitting: HittingTimes,
}

fn axis_basis(d: usize, k: usize) -> Matrix {
    Matrix::from_fn(d, k, |i, j| if i == j { 1.0 } else { 0.0 })
}

/// Rotate the iterate into the covariance eigenbasis (a no-op for identity
/// rotations, which are the common case in tests).
fn rotated_view(u: &Matrix, rotation: Option<&Matrix>) -> Matrix {
    match rotation {
        None => u.clone(),
        Some(q) => q.transpose().matmul(u),
    }
}

impl Measurement {
    fn validate(&self, d: usize, p: usize) -> Result<(), EngineError> {
        if self.target_width < p || self.target_width >= d {
            return Err(EngineError::BadConfig(format!(
                "target width {} must satisfy p={p} <= q < d={d}",
                self.target_width
            )));
        }
        if let Some(r) = &self.rotation {
            if r.rows() != d || r.cols() != d {
                return Err(EngineError::BadConfig("rotation must be d x d".into()));
            }
        }
        Ok(())
    }

    /// Record errors for the current basis. For `q = p`, tangent and sine
    /// norms come from the singular values of the chart matrix (exact, and
    /// exactly zero at the noiseless fixed point); the cosine route is the
    /// fallback when the chart does not exist. For `q > p`, the chart
    /// supplies `||T_q||_F` and the angles are measured against the wider
    /// axis target.
    fn record(
        &self,
        u: &Matrix,
        n: u64,
        capture_chart: bool,
    ) -> Result<StepRecord, EngineError> {
        let p = u.cols();
        let q = self.target_width;
        let v = rotated_view(u, self.rotation.as_ref());
        let chart = match subspace::chart_coords(&v, q) {
            Ok(t) => Some(t),
            Err(SubspaceError::HeadSingular) => None,
            Err(e) => return Err(e.into()),
        };
        let mut rec = StepRecord {
            n,
            sin2_f: f64::NAN,
            tan_f: f64::NAN,
            tan_2: f64::NAN,
            chart_tail_f: f64::NAN,
            chart: None,
            in_ball: None,
            escaped_by_now: None,
            bound_violated_by_now: None,
        };
        if q == p {
            match &chart {
                Some(t) => {
                    let sv = matrix::svd(t)?.singular_values;
                    rec.tan_f = t.fro_norm();
                    rec.tan_2 = sv[0];
                    rec.sin2_f = sv.iter().map(|s| s * s / (1.0 + s * s)).sum();
                }
                None => {
                    rec.tan_f = f64::INFINITY;
                    rec.tan_2 = f64::INFINITY;
                    let vo = orthonormal_view(&v)?;
                    let s = subspace::sin_theta_norm(&vo, &axis_basis(v.rows(), p), NormKind::Frobenius)?;
                    rec.sin2_f = s * s;
                }
            }
        } else {
            rec.chart_tail_f = chart.as_ref().map_or(f64::INFINITY, |t| t.fro_norm());
            let vo = orthonormal_view(&v)?;
            let target = axis_basis(v.rows(), q);
            let angles = subspace::principal_angles(&vo, &target)?;
            rec.sin2_f = angles.sines().iter().map(|s| s * s).sum();
            let tangents = angles.tangents();
            rec.tan_f = tangents.iter().map(|t| t * t).sum::<f64>().sqrt();
            rec.tan_2 = tangents.iter().fold(0.0, |a: f64, &b| a.max(b));
        }
        if capture_chart {
            rec.chart = chart;
        }
        Ok(rec)
    }
}

/// The angle route needs orthonormal columns; deferred iterates between
/// normalizations are not, so orthonormalize a copy (span-preserving).
fn orthonormal_view(v: &Matrix) -> Result<Matrix, EngineError> {
    if v.orthonormality_residual() <= 1e-10 * (v.cols() as f64).sqrt().max(1.0) {
        Ok(v.clone())
    } else {
        Ok(matrix::qr_orthonormalize(v)?)
    }
}

struct DiagTracker<'a> {
    spec: &'a DiagnosticsSpec,
    hitting: HittingTimes,
    coord_bounds: Vec<f64>,
    proj_bound: f64,
    currently_in_ball: bool,
}

impl<'a> DiagTracker<'a> {
    fn new(spec: &'a DiagnosticsSpec, p: usize) -> Self {
        let coord_bounds: Vec<f64> = spec.lambdas.iter().map(|l| (l * spec.mu).sqrt()).collect();
        let head: f64 = spec.lambdas[..p].iter().sum();
        DiagTracker {
            spec,
            hitting: HittingTimes::default(),
            coord_bounds,
            proj_bound: (head * spec.mu).sqrt(),
            currently_in_ball: true,
        }
    }

    /// Chart-ball membership is checked through the chart norm, which is
    /// well-defined even for a deferred (non-orthonormal) basis; a missing
    /// chart counts as outside every ball.
    fn check_state(&mut self, u: &Matrix, n: u64) -> Result<(), EngineError> {
        let v = rotated_view(u, self.spec.rotation.as_ref());
        let p = u.cols();
        let norm = match subspace::chart_coords(&v, p) {
            Ok(t) => t.spectral_norm()?,
            Err(SubspaceError::HeadSingular) => f64::INFINITY,
            Err(e) => return Err(e.into()),
        };
        self.currently_in_ball = norm <= self.spec.kappa;
        if self.hitting.first_exit.is_none() && !self.currently_in_ball {
            self.hitting.first_exit = Some(n);
        }
        if self.hitting.first_entry.is_none() && norm <= self.spec.entry_radius {
            self.hitting.first_entry = Some(n);
        }
        Ok(())
    }

    /// Magnitude bounds are checked on the sample as seen in the eigenbasis
    /// and on its projection onto the pre-update iterate.
    fn check_sample(&mut self, u_prev: &Matrix, x: &[f64], n: u64) {
        if self.hitting.first_bound_violation.is_some() {
            return;
        }
        let d = x.len();
        let mut violated = false;
        match self.spec.rotation.as_ref() {
            None => {
                for (xi, bound) in x.iter().zip(&self.coord_bounds) {
                    if xi.abs() > *bound {
                        violated = true;
                        break;
                    }
                }
            }
            Some(qm) => {
                for i in 0..d {
                    let mut yi = 0.0;
                    for j in 0..d {
                        yi += qm[(j, i)] * x[j];
                    }
                    if yi.abs() > self.coord_bounds[i] {
                        violated = true;
                        break;
                    }
                }
            }
        }
        if !violated {
            let p = u_prev.cols();
            let mut z2 = 0.0;
            for j in 0..p {
                let mut zj = 0.0;
                for i in 0..d {
                    zj += u_prev[(i, j)] * x[i];
                }
                z2 += zj * zj;
            }
            violated = z2.sqrt() > self.proj_bound;
        }
        if violated {
            self.hitting.first_bound_violation = Some(n);
        }
    }
}

/// Drive `state` through `n_steps` samples, recording at the requested
/// checkpoints. See [`RunConfig`].
pub fn run(
    mut state: OjaState,
    source: &mut dyn SampleSource,
    cfg: &RunConfig,
) -> Result<RunOutput, EngineError> {
    let (d, p) = (state.u.rows(), state.u.cols());
    cfg.schedule.validate()?;
    cfg.normalizer.validate()?;
    if source.dim() != d {
        return Err(EngineError::BadConfig(format!(
            "source dimension {} does not match state dimension {d}",
            source.dim()
        )));
    }
    if let Some(m) = cfg.measure {
        m.validate(d, p)?;
    }
    if !cfg.checkpoints.windows(2).all(|w| w[0] < w[1]) {
        return Err(EngineError::BadConfig("checkpoints must be strictly increasing".into()));
    }
    if cfg.checkpoints.last().is_some_and(|&last| last > state.n + cfg.n_steps) {
        return Err(EngineError::BadConfig("checkpoint beyond the run horizon".into()));
    }

    let mut records = Vec::with_capacity(cfg.checkpoints.len());
    let mut tracker = cfg.diagnostics.map(|spec| DiagTracker::new(spec, p));
    let mut next_ck = cfg.checkpoints.iter().copied().peekable();

    if let Some(t) = tracker.as_mut() {
        t.check_state(&state.u, state.n)?;
    }
    if next_ck.peek() == Some(&state.n) {
        next_ck.next();
        push_record(&mut records, &state, cfg, tracker.as_ref())?;
    }

    let mut x = vec![0.0; d];
    let end = state.n + cfg.n_steps;
    while state.n < end {
        let n = state.n + 1;
        if !source.next_sample(&mut x) {
            return Err(EngineError::StreamExhausted { needed: end, got: state.n });
        }
        if let Some(t) = tracker.as_mut() {
            t.check_sample(&state.u, &x, n);
        }
        let eta = cfg.schedule.rate(n);
        step(&mut state, &x, eta, cfg.normalizer)?;
        // A deferred basis is always left normalized at the end of a run.
        if n == end && state.steps_since_norm > 0 {
            state.u = matrix::qr_orthonormalize(&state.u)?;
            state.steps_since_norm = 0;
        }
        if let Some(t) = tracker.as_mut() {
            t.check_state(&state.u, n)?;
        }
        if next_ck.peek() == Some(&n) {
            next_ck.next();
            push_record(&mut records, &state, cfg, tracker.as_ref())?;
        }
    }

    let hitting = tracker.map(|t| t.hitting).unwrap_or_default();
    Ok(RunOutput { state, records, hitting })
}

fn push_record(
    records: &mut Vec<StepRecord>,
    state: &OjaState,
    cfg: &RunConfig,
    tracker: Option<&DiagTracker>,
) -> Result<(), EngineError> {
    let mut rec = match cfg.measure {
        Some(m) => m.record(&state.u, state.n, cfg.capture_chart)?,
        None => StepRecord {
            n: state.n,
            sin2_f: f64::NAN,
            tan_f: f64::NAN,
            tan_2: f64::NAN,
            chart_tail_f: f64::NAN,
            chart: None,
            in_ball: None,
            escaped_by_now: None,
            bound_violated_by_now: None,
        },
    };
    if let Some(t) = tracker {
        rec.in_ball = Some(t.currently_in_ball);
        rec.escaped_by_now = Some(t.hitting.first_exit.is_some_and(|e| e <= state.n));
        rec.bound_violated_by_now =
            Some(t.hitting.first_bound_violation.is_some_and(|e| e <= state.n));
    }
    records.push(rec);
    Ok(())
}

// ---------------------------------------------------------------------------
// Checkpoint files
// ---------------------------------------------------------------------------

/// A persisted run state. JSON with full-precision floats: reloading in the
/// same build reproduces the basis bit for bit, and replaying the seeded
/// stream past `step` resumes the run exactly.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub dim: usize,
    pub width: usize,
    pub step: u64,
    pub schedule: Schedule,
    pub normalizer: Normalizer,
    pub seed: u64,
    /// First-hitting history up to `step`. Carrying it across the file lets
    /// a resumed run report the same cumulative diagnostic flags as an
    /// uninterrupted one. Absent in older files, which read as "no events".
    #[serde(default)]
    pub hitting: HittingTimes,
    /// Row-major `dim x width` basis entries.
    pub basis: Vec<f64>,
}

impl Checkpoint {
    /// Snapshot a state together with its run parameters and the hitting
    /// history accumulated so far.
    pub fn of(
        state: &OjaState,
        schedule: &Schedule,
        normalizer: Normalizer,
        seed: u64,
        hitting: HittingTimes,
    ) -> Self {
        Checkpoint {
            dim: state.u.rows(),
            width: state.u.cols(),
            step: state.n,
            schedule: schedule.clone(),
            normalizer,
            seed,
            hitting,
            basis: state.u.as_slice().to_vec(),
        }
    }

    /// Rebuild the iterate state.
    pub fn into_state(&self) -> Result<OjaState, EngineError> {
        let u = Matrix::from_vec(self.dim, self.width, self.basis.clone())
            .map_err(|e| EngineError::BadConfig(format!("corrupt checkpoint basis: {e}")))?;
        OjaState::from_parts(u, self.step)
    }
}

/// Write a checkpoint file.
pub fn save_checkpoint(path: &Path, cp: &Checkpoint) -> Result<(), EngineError> {
    let text = serde_json::to_string_pretty(cp)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Read a checkpoint file.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, EngineError> {
    let text = std::fs::read_to_string(path)?;
    let cp: Checkpoint = serde_json::from_str(&text)?;
    if cp.basis.len() != cp.dim * cp.width {
        return Err(EngineError::BadConfig(format!(
            "checkpoint basis has {} entries for a {}x{} state",
            cp.basis.len(),
            cp.dim,
            cp.width
        )));
    }
    cp.schedule.validate()?;
    cp.normalizer.validate()?;
    Ok(cp)
}
