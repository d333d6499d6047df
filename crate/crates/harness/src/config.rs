//! Experiment configuration: a TOML file with one table per concern.
//!
//! A config names either a synthetic covariance model (`[model]`) or a
//! sample file (`[data]`), the run shape (`[run]`), the learning-rate
//! schedule (`[schedule]`), the normalization policy (`[normalizer]`),
//! output locations (`[output]`), and the free constants of the rate
//! theory (`[constants]`). Grid runs add a `[sweep]` table of value lists.
//! Unknown keys anywhere are rejected, as are known keys that do not apply
//! to the selected variant (for example `eta` on a harmonic schedule):
//! silently ignoring a misplaced knob is how wrong experiments get
//! published.
//!
//! Defaults: harmonic schedule with `c_eta = 2` normalized by the model's
//! gap, QR normalization, one repetition from seed 0, checkpoints at
//! powers of two plus the final step. The `OJA_SEED` environment variable
//! (read by the binary, passed in here as an override) replaces
//! `base_seed`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use oja_core::engine::{Normalizer, Schedule};
use oja_core::samplers::{CovSpec, Family};
use oja_core::theory;
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

// ---------------------------------------------------------------------------
// Raw file schema
// ---------------------------------------------------------------------------

/// The config file as written, before defaults and cross-checks.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub model: Option<RawModel>,
    pub data: Option<RawData>,
    pub run: Option<RawRun>,
    #[serde(default)]
    pub schedule: RawSchedule,
    #[serde(default)]
    pub normalizer: RawNormalizer,
    #[serde(default)]
    pub output: RawOutput,
    #[serde(default)]
    pub constants: Constants,
    pub sweep: Option<RawSweep>,
}

/// `[model]`: synthetic covariance spectrum and target.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    /// Eigenvalues, nonincreasing, all positive.
    pub lambdas: Vec<f64>,
    /// Width of the subspace being estimated.
    pub p: usize,
    /// Relaxed target width for gap-free runs (`p <= q < d`).
    pub q: Option<usize>,
    /// Gap threshold for gap-free runs; admissible values lie in
    /// `[lambda_p - lambda_q, lambda_p - lambda_{q+1}]`.
    pub gamma_tilde: Option<f64>,
    /// Coordinate distribution; defaults to `gaussian`.
    pub family: Option<Family>,
    /// Seed for a random eigenbasis rotation; omitted means axis-aligned.
    pub rotation_seed: Option<u64>,
}

/// `[data]`: a recorded sample file instead of a synthetic model.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawData {
    pub path: String,
    /// Row dimension; must match the file.
    pub dim: usize,
    /// Width of the subspace being estimated.
    pub p: usize,
    /// `auto` (default), `csv`, or `binary`.
    pub format: Option<String>,
}

/// `[run]`: horizon, repetitions, seeds, checkpoints, persistence.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRun {
    pub n_steps: u64,
    pub repetitions: Option<u64>,
    pub base_seed: Option<u64>,
    /// Strictly increasing steps to record at; the last must equal
    /// `n_steps`. Defaults to powers of two plus `n_steps`.
    pub checkpoints: Option<Vec<u64>>,
    /// Resume a single run from a saved state file.
    pub resume_from: Option<String>,
    /// Persist the final state of a single run to this file.
    pub checkpoint_file: Option<String>,
    /// Keep chart matrices at checkpoints (needed for envelope checks).
    pub capture_chart: Option<bool>,
}

/// `[schedule]`: one of `constant`, `harmonic`, `two-phase`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSchedule {
    pub kind: Option<String>,
    /// Fixed rate (constant only).
    pub eta: Option<f64>,
    /// Decay constant (harmonic and two-phase); default 2.
    pub c_eta: Option<f64>,
    /// Gap the rates are normalized by; defaults to the model's gap (or
    /// `gamma_tilde` in gap-free mode). Required in data mode.
    pub gamma_ref: Option<f64>,
    /// Warm-up length (two-phase only, required there).
    pub n_o: Option<u64>,
    /// Warm-up rate constant (two-phase only); default 1.
    pub c_o_prime: Option<f64>,
}

/// `[normalizer]`: `qr` (default), `polar`, or `deferred`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNormalizer {
    pub kind: Option<String>,
    /// Steps between re-orthonormalizations (deferred only); default 10.
    pub period: Option<u32>,
}

/// `[output]`: destination directory and file names.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    pub dir: Option<String>,
    pub records: Option<String>,
    pub summary: Option<String>,
    /// Include the second-moment envelope overlay in the summary.
    pub envelope: Option<bool>,
}

/// `[constants]`: the free constants of the rate theory, with the
/// defaults used throughout the experiments.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Constants {
    /// Warm-up budget constant.
    pub c_o: f64,
    /// Minimax lower-bound constant.
    pub c: f64,
    /// Envelope remainder constant.
    pub c_r: f64,
    /// Sample magnitude factor: coordinate `i` is flagged beyond
    /// `sqrt(lambda_i * mu)`.
    pub mu: f64,
    /// Chart-ball radius whose first exit is recorded.
    pub kappa: f64,
    /// Chart-ball radius whose first entry is recorded.
    pub epsilon: f64,
    /// Confidence split used by the two-phase warm rate and the envelope
    /// remainder.
    pub delta: f64,
    /// Fourth-moment proxy; the envelope drive scale is `16 * psi4`.
    pub psi4: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Constants {
            c_o: 1.0,
            c: 1.0,
            c_r: 10.0,
            mu: 9.0,
            kappa: 2.0,
            epsilon: 0.5,
            delta: 0.1,
            psi4: 16.0,
        }
    }
}

/// `[sweep]`: value lists; the grid is their cartesian product applied on
/// top of the base config.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSweep {
    pub n_steps: Option<Vec<u64>>,
    pub repetitions: Option<Vec<u64>>,
    pub c_eta: Option<Vec<f64>>,
    pub normalizer: Option<Vec<String>>,
    pub family: Option<Vec<Family>>,
    pub base_seed: Option<Vec<u64>>,
}

// ---------------------------------------------------------------------------
// Resolved configuration
// ---------------------------------------------------------------------------

/// Sample file format selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FileFormat {
    Auto,
    Csv,
    Binary,
}

/// Where samples come from.
#[derive(Clone, Debug)]
pub enum Mode {
    /// Synthetic model with known ground truth.
    Synthetic {
        spec: CovSpec,
        gamma_tilde: Option<f64>,
        rotation_seed: Option<u64>,
    },
    /// Recorded samples; no ground-truth errors are available.
    Data {
        path: PathBuf,
        dim: usize,
        p: usize,
        format: FileFormat,
    },
}

impl Mode {
    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        match self {
            Mode::Synthetic { spec, .. } => spec.dim(),
            Mode::Data { dim, .. } => *dim,
        }
    }

    /// Estimated subspace width.
    pub fn p(&self) -> usize {
        match self {
            Mode::Synthetic { spec, .. } => spec.p(),
            Mode::Data { p, .. } => *p,
        }
    }

    /// The synthetic model, when there is one.
    pub fn spec(&self) -> Option<&CovSpec> {
        match self {
            Mode::Synthetic { spec, .. } => Some(spec),
            Mode::Data { .. } => None,
        }
    }
}

/// Resolved output locations.
#[derive(Clone, Debug)]
pub struct OutputPaths {
    pub dir: PathBuf,
    pub records: String,
    pub summary: String,
}

impl OutputPaths {
    /// Full path of the records CSV.
    pub fn records_path(&self) -> PathBuf {
        self.dir.join(&self.records)
    }

    /// Full path of the summary JSON.
    pub fn summary_path(&self) -> PathBuf {
        self.dir.join(&self.summary)
    }
}

/// A validated experiment: every default filled, every cross-check done.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub schedule: Schedule,
    pub normalizer: Normalizer,
    pub n_steps: u64,
    pub repetitions: u64,
    pub base_seed: u64,
    pub checkpoints: Vec<u64>,
    pub resume_from: Option<PathBuf>,
    pub checkpoint_file: Option<PathBuf>,
    pub capture_chart: bool,
    pub constants: Constants,
    pub output: OutputPaths,
    pub envelope_overlay: bool,
    /// The file as written, kept for sweep expansion.
    pub raw: RawConfig,
}

impl ExperimentConfig {
    /// JSON echo of the resolved configuration, embedded in summaries.
    pub fn echo(&self) -> serde_json::Value {
        let mode = match &self.mode {
            Mode::Synthetic {
                spec,
                gamma_tilde,
                rotation_seed,
            } => serde_json::json!({
                "synthetic": {
                    "lambdas": spec.lambdas(),
                    "p": spec.p(),
                    "q": spec.q(),
                    "gamma_tilde": gamma_tilde,
                    "family": spec.family(),
                    "rotation_seed": rotation_seed,
                }
            }),
            Mode::Data {
                path,
                dim,
                p,
                format,
            } => serde_json::json!({
                "data": {
                    "path": path.display().to_string(),
                    "dim": dim,
                    "p": p,
                    "format": format!("{format:?}").to_lowercase(),
                }
            }),
        };
        serde_json::json!({
            "mode": mode,
            "schedule": self.schedule,
            "normalizer": self.normalizer,
            "n_steps": self.n_steps,
            "repetitions": self.repetitions,
            "base_seed": self.base_seed,
            "checkpoints": self.checkpoints,
            "constants": self.constants,
            "envelope_overlay": self.envelope_overlay,
        })
    }
}

// ---------------------------------------------------------------------------
// Parsing and resolution
// ---------------------------------------------------------------------------

/// Read and resolve a config file. `seed_override` (from `OJA_SEED`)
/// replaces `base_seed` when present.
pub fn parse_config(
    path: &Path,
    seed_override: Option<u64>,
) -> Result<ExperimentConfig, HarnessError> {
    let text = fs::read_to_string(path)
        .map_err(|e| HarnessError::Parse(format!("{}: {e}", path.display())))?;
    from_str(&text, seed_override)
}

/// Parse config text. Split from [`parse_config`] so tests need no files.
pub fn from_str(text: &str, seed_override: Option<u64>) -> Result<ExperimentConfig, HarnessError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
    resolve(raw, seed_override)
}

fn bad(msg: impl Into<String>) -> HarnessError {
    HarnessError::Validation(msg.into())
}

/// Checkpoints used when the config names none: powers of two up to the
/// horizon, plus the horizon itself.
pub fn default_checkpoints(n_steps: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut k = 1u64;
    while k < n_steps {
        out.push(k);
        match k.checked_mul(2) {
            Some(next) => k = next,
            None => break,
        }
    }
    out.push(n_steps);
    out
}

fn resolve_mode(raw: &RawConfig) -> Result<Mode, HarnessError> {
    match (&raw.model, &raw.data) {
        (Some(_), Some(_)) => Err(bad("give either [model] or [data], not both")),
        (None, None) => Err(bad("a config needs a [model] or a [data] table")),
        (Some(m), None) => {
            let family = m.family.unwrap_or(Family::Gaussian);
            let spec = match m.q {
                None => {
                    if m.gamma_tilde.is_some() {
                        return Err(bad("gamma_tilde is only meaningful with a target width q"));
                    }
                    CovSpec::new(m.lambdas.clone(), m.p, family, m.rotation_seed)
                        .map_err(|e| bad(e.to_string()))?
                }
                Some(q) => {
                    let spec =
                        CovSpec::new_gap_free(m.lambdas.clone(), m.p, q, family, m.rotation_seed)
                            .map_err(|e| bad(e.to_string()))?;
                    if q > m.p && m.gamma_tilde.is_none() {
                        return Err(bad("a target wider than p needs gamma_tilde"));
                    }
                    if let Some(gt) = m.gamma_tilde {
                        // Admissibility of the threshold, including the
                        // closed interval endpoints.
                        theory::phi_gap_free(&m.lambdas, m.p, q, gt)
                            .map_err(|e| bad(e.to_string()))?;
                    }
                    spec
                }
            };
            Ok(Mode::Synthetic {
                spec,
                gamma_tilde: m.gamma_tilde,
                rotation_seed: m.rotation_seed,
            })
        }
        (None, Some(d)) => {
            if d.dim < 2 {
                return Err(bad(format!("data dimension must be at least 2, got {}", d.dim)));
            }
            if d.p == 0 || d.p >= d.dim {
                return Err(bad(format!(
                    "need 1 <= p < dim, got p={}, dim={}",
                    d.p, d.dim
                )));
            }
            let format = match d.format.as_deref() {
                None | Some("auto") => FileFormat::Auto,
                Some("csv") => FileFormat::Csv,
                Some("binary") => FileFormat::Binary,
                Some(other) => {
                    return Err(bad(format!(
                        "unknown data format {other:?}; use auto, csv, or binary"
                    )))
                }
            };
            Ok(Mode::Data {
                path: PathBuf::from(&d.path),
                dim: d.dim,
                p: d.p,
                format,
            })
        }
    }
}

fn resolve_schedule(
    raw: &RawSchedule,
    mode: &Mode,
    gamma_tilde: Option<f64>,
    constants: &Constants,
) -> Result<Schedule, HarnessError> {
    let reject = |field: &str, kind: &str| -> HarnessError {
        bad(format!("schedule field {field} does not apply to kind {kind:?}"))
    };
    // The gap the decaying rates are normalized by: explicit, else the
    // model's threshold (gamma_tilde when targeting a wider subspace).
    let default_gamma_ref = || -> Result<f64, HarnessError> {
        if let Some(v) = raw.gamma_ref {
            if !(v.is_finite() && v > 0.0) {
                return Err(bad(format!("gamma_ref must be positive, got {v}")));
            }
            return Ok(v);
        }
        match mode {
            Mode::Synthetic { spec, .. } => match gamma_tilde {
                Some(gt) => Ok(gt),
                None => Ok(spec.gamma()),
            },
            Mode::Data { .. } => Err(bad(
                "data mode has no spectrum to derive gamma_ref from; set schedule.gamma_ref",
            )),
        }
    };
    let kind = raw.kind.as_deref().unwrap_or("harmonic");
    let schedule = match kind {
        "constant" => {
            for (name, present) in [
                ("c_eta", raw.c_eta.is_some()),
                ("gamma_ref", raw.gamma_ref.is_some()),
                ("n_o", raw.n_o.is_some()),
                ("c_o_prime", raw.c_o_prime.is_some()),
            ] {
                if present {
                    return Err(reject(name, kind));
                }
            }
            let eta = raw.eta.ok_or_else(|| bad("a constant schedule needs eta"))?;
            Schedule::constant(eta)
        }
        "harmonic" => {
            for (name, present) in [
                ("eta", raw.eta.is_some()),
                ("n_o", raw.n_o.is_some()),
                ("c_o_prime", raw.c_o_prime.is_some()),
            ] {
                if present {
                    return Err(reject(name, kind));
                }
            }
            Schedule::harmonic(raw.c_eta.unwrap_or(2.0), default_gamma_ref()?)
        }
        "two-phase" => {
            if raw.eta.is_some() {
                return Err(reject("eta", kind));
            }
            let n_o = raw
                .n_o
                .ok_or_else(|| bad("a two-phase schedule needs an explicit warm-up length n_o"))?;
            Schedule::two_phase(
                n_o,
                raw.c_o_prime.unwrap_or(1.0),
                raw.c_eta.unwrap_or(2.0),
                default_gamma_ref()?,
                mode.dim(),
                constants.delta,
            )
        }
        other => {
            return Err(bad(format!(
                "unknown schedule kind {other:?}; use constant, harmonic, or two-phase"
            )))
        }
    };
    schedule.map_err(|e| bad(e.to_string()))
}

fn resolve_normalizer(raw: &RawNormalizer) -> Result<Normalizer, HarnessError> {
    let kind = raw.kind.as_deref().unwrap_or("qr");
    match kind {
        "qr" | "polar" => {
            if raw.period.is_some() {
                return Err(bad(format!(
                    "normalizer field period does not apply to kind {kind:?}"
                )));
            }
            Ok(if kind == "qr" { Normalizer::Qr } else { Normalizer::Polar })
        }
        "deferred" => {
            let n = Normalizer::Deferred {
                period: raw.period.unwrap_or(10),
            };
            n.validate().map_err(|e| bad(e.to_string()))?;
            Ok(n)
        }
        other => Err(bad(format!(
            "unknown normalizer kind {other:?}; use qr, polar, or deferred"
        ))),
    }
}

fn validate_constants(c: &Constants) -> Result<(), HarnessError> {
    for (name, v) in [
        ("c_o", c.c_o),
        ("c", c.c),
        ("c_r", c.c_r),
        ("mu", c.mu),
        ("kappa", c.kappa),
        ("epsilon", c.epsilon),
        ("psi4", c.psi4),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(bad(format!("constants.{name} must be positive, got {v}")));
        }
    }
    if !(c.delta > 0.0 && c.delta < 1.0) {
        return Err(bad(format!(
            "constants.delta must lie in (0, 1), got {}",
            c.delta
        )));
    }
    Ok(())
}

fn resolve(raw: RawConfig, seed_override: Option<u64>) -> Result<ExperimentConfig, HarnessError> {
    let run = raw
        .run
        .as_ref()
        .ok_or_else(|| bad("a config needs a [run] table"))?
        .clone();
    validate_constants(&raw.constants)?;
    let mode = resolve_mode(&raw)?;
    let gamma_tilde = match &mode {
        Mode::Synthetic { gamma_tilde, .. } => *gamma_tilde,
        Mode::Data { .. } => None,
    };
    let schedule = resolve_schedule(&raw.schedule, &mode, gamma_tilde, &raw.constants)?;
    let normalizer = resolve_normalizer(&raw.normalizer)?;

    let repetitions = run.repetitions.unwrap_or(1);
    if repetitions == 0 {
        return Err(bad("repetitions must be at least 1"));
    }
    let base_seed = seed_override.or(run.base_seed).unwrap_or(0);
    if base_seed.checked_add(repetitions - 1).is_none() {
        return Err(bad("base_seed + repetitions overflows the seed space"));
    }

    let checkpoints = match &run.checkpoints {
        None => default_checkpoints(run.n_steps),
        Some(list) => {
            if list.is_empty() {
                return Err(bad("checkpoints must not be empty"));
            }
            if !list.windows(2).all(|w| w[0] < w[1]) {
                return Err(bad("checkpoints must be strictly increasing"));
            }
            if *list.last().unwrap() != run.n_steps {
                return Err(bad(format!(
                    "the last checkpoint must equal n_steps = {}, got {}",
                    run.n_steps,
                    list.last().unwrap()
                )));
            }
            list.clone()
        }
    };

    let resume_from = run.resume_from.as_ref().map(PathBuf::from);
    let checkpoint_file = run.checkpoint_file.as_ref().map(PathBuf::from);
    if (resume_from.is_some() || checkpoint_file.is_some()) && repetitions != 1 {
        return Err(bad(
            "resume_from and checkpoint_file describe one run; they need repetitions = 1",
        ));
    }

    let envelope_overlay = raw.output.envelope.unwrap_or(false);
    if envelope_overlay {
        match &mode {
            Mode::Data { .. } => {
                return Err(bad("the envelope overlay needs a synthetic model"));
            }
            Mode::Synthetic { spec, .. } => {
                if spec.gamma() <= 0.0 {
                    return Err(bad(
                        "the envelope overlay needs a positive gap at p; this spectrum has none",
                    ));
                }
            }
        }
    }

    let output = OutputPaths {
        dir: PathBuf::from(raw.output.dir.as_deref().unwrap_or("oja-out")),
        records: raw.output.records.clone().unwrap_or_else(|| "records.csv".into()),
        summary: raw.output.summary.clone().unwrap_or_else(|| "summary.json".into()),
    };

    Ok(ExperimentConfig {
        mode,
        schedule,
        normalizer,
        n_steps: run.n_steps,
        repetitions,
        base_seed,
        checkpoints,
        resume_from,
        checkpoint_file,
        capture_chart: run.capture_chart.unwrap_or(false),
        constants: raw.constants,
        output,
        envelope_overlay,
        raw,
    })
}

// ---------------------------------------------------------------------------
// Sweep expansion
// ---------------------------------------------------------------------------

fn family_label(f: Family) -> &'static str {
    match f {
        Family::Gaussian => "gaussian",
        Family::Rademacher => "rademacher",
        Family::UniformBall => "uniform-ball",
    }
}

/// Expand the `[sweep]` grid into labeled raw configs, base values
/// overridden axis by axis. The combination order is the nested iteration
/// of the axes in declaration order, so output layout is deterministic.
pub fn expand_sweep(raw: &RawConfig) -> Result<Vec<(String, RawConfig)>, HarnessError> {
    let sweep = raw
        .sweep
        .as_ref()
        .ok_or_else(|| bad("sweep needs a [sweep] table of value lists"))?;
    for (axis, empty) in [
        ("n_steps", sweep.n_steps.as_ref().is_some_and(|v| v.is_empty())),
        ("repetitions", sweep.repetitions.as_ref().is_some_and(|v| v.is_empty())),
        ("c_eta", sweep.c_eta.as_ref().is_some_and(|v| v.is_empty())),
        ("normalizer", sweep.normalizer.as_ref().is_some_and(|v| v.is_empty())),
        ("family", sweep.family.as_ref().is_some_and(|v| v.is_empty())),
        ("base_seed", sweep.base_seed.as_ref().is_some_and(|v| v.is_empty())),
    ] {
        if empty {
            return Err(bad(format!("sweep axis {axis} must not be an empty list")));
        }
    }
    if sweep.family.is_some() && raw.model.is_none() {
        return Err(bad("a family sweep needs a synthetic [model]"));
    }
    if raw.run.is_none() {
        return Err(bad("a config needs a [run] table"));
    }

    // Each axis contributes either its list or a single "keep the base"
    // marker, so the nested loops below cover exactly the requested grid.
    let n_steps: Vec<Option<u64>> = opt_axis(&sweep.n_steps);
    let repetitions: Vec<Option<u64>> = opt_axis(&sweep.repetitions);
    let c_etas: Vec<Option<f64>> = opt_axis(&sweep.c_eta);
    let normalizers: Vec<Option<String>> = opt_axis(&sweep.normalizer);
    let families: Vec<Option<Family>> = opt_axis(&sweep.family);
    let seeds: Vec<Option<u64>> = opt_axis(&sweep.base_seed);

    let mut out = Vec::new();
    for ns in &n_steps {
        for reps in &repetitions {
            for ce in &c_etas {
                for nz in &normalizers {
                    for fam in &families {
                        for seed in &seeds {
                            let mut combo = raw.clone();
                            combo.sweep = None;
                            let mut label = String::new();
                            if let Some(v) = ns {
                                combo.run.as_mut().expect("run table checked").n_steps = *v;
                                let _ = write!(label, "n{v}-");
                            }
                            if let Some(v) = reps {
                                combo.run.as_mut().expect("run table checked").repetitions =
                                    Some(*v);
                                let _ = write!(label, "r{v}-");
                            }
                            if let Some(v) = ce {
                                combo.schedule.c_eta = Some(*v);
                                let _ = write!(label, "ceta{v}-");
                            }
                            if let Some(v) = nz {
                                combo.normalizer.kind = Some(v.clone());
                                let _ = write!(label, "{v}-");
                            }
                            if let Some(v) = fam {
                                combo.model.as_mut().expect("family sweep checked").family =
                                    Some(*v);
                                let _ = write!(label, "{}-", family_label(*v));
                            }
                            if let Some(v) = seed {
                                combo.run.as_mut().expect("run table checked").base_seed =
                                    Some(*v);
                                let _ = write!(label, "s{v}-");
                            }
                            let label = label.trim_end_matches('-').to_string();
                            let label = if label.is_empty() { "base".into() } else { label };
                            out.push((label, combo));
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn opt_axis<T: Clone>(axis: &Option<Vec<T>>) -> Vec<Option<T>> {
    match axis {
        Some(values) => values.iter().cloned().map(Some).collect(),
        None => vec![None],
    }
}
