//! Parallel Monte-Carlo experiment execution.
//!
//! An experiment runs `repetitions` independent trials. Trial `r` seeds
//! both its initial guess and its sample stream with `base_seed + r`
//! (independent generator streams keep the two uncorrelated), so the whole
//! table is reproducible from the config alone, regardless of how the work
//! is scheduled across threads: trials are collected in seed order and
//! aggregation is a deterministic single-threaded reduce.
//!
//! Per checkpoint, the summary reports the mean and central 90% band of
//! each error statistic, theory overlays (the `phi/n` asymptote, the
//! minimax floor, optionally the second-moment envelope with its
//! remainder), and a log-log rate fit over the post-burn-in checkpoints.
//! Failed trials do not void the finished ones: completed rows are flushed
//! to the records CSV before the first error is returned.

use std::collections::BTreeMap;
use std::fs;
use std::sync::Arc;

use oja_core::engine::{
    self, DiagnosticsSpec, Measurement, OjaState, RunConfig, Schedule,
};
use oja_core::matrix::Matrix;
use oja_core::samplers::SampleStream;
use oja_core::stream::{self, SampleSource};
use oja_core::theory::{self, RateConstants};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, Mode};
use crate::error::HarnessError;
use crate::fit::{self, RateFit};
use crate::ingest::{self, SharedSource};
use crate::output::{self, Band, TrialRow};

/// Everything one trial produced.
pub struct TrialOutcome {
    pub seed: u64,
    pub rows: Vec<TrialRow>,
    pub hitting: engine::HittingTimes,
    /// Captured chart matrices, one per checkpoint, when requested.
    pub charts: Vec<(u64, Matrix)>,
    pub final_state: OjaState,
}

/// How many trials hit each diagnostic event at least once.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TrialCounts {
    pub repetitions: u64,
    /// Entered the small chart ball.
    pub entered: u64,
    /// Left the large chart ball.
    pub escaped: u64,
    /// Broke a sample magnitude bound.
    pub bound_violated: u64,
}

/// Closed-form reference quantities for the model being simulated.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TheoryOverlay {
    pub rate_constants: RateConstants,
    /// Flat-rate steps that drive a random guess into the unit chart ball;
    /// absent when the budget formula is undefined for these constants.
    pub warm_up_budget: Option<u64>,
    /// Sample norm bound `mu * trace` the budget is computed with.
    pub sample_norm_bound: f64,
}

/// Aggregates and overlays at one checkpoint.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CheckpointStats {
    pub n: u64,
    /// Squared Frobenius sine error.
    pub sin2_f: Option<Band>,
    /// Frobenius tangent error.
    pub tan_f: Option<Band>,
    /// Spectral tangent error.
    pub tan_2: Option<Band>,
    /// Squared tail-block chart norm (wide targets only).
    pub chart_tail_sq: Option<Band>,
    /// The `phi / n` asymptote.
    pub phi_over_n: Option<f64>,
    /// Minimax floor at this sample count.
    pub minimax: Option<f64>,
    /// Entrywise-envelope total (a bound on the squared Frobenius chart
    /// norm), when the overlay is enabled.
    pub envelope_fro_sq: Option<f64>,
    /// Stochastic remainder reported alongside the envelope.
    pub remainder: Option<f64>,
}

/// The JSON summary: config echo, per-checkpoint statistics, overlays,
/// and the fitted decay rate.
#[derive(Debug, Serialize)]
pub struct Summary {
    pub config: serde_json::Value,
    pub trials: TrialCounts,
    pub checkpoints: Vec<CheckpointStats>,
    pub theory: Option<TheoryOverlay>,
    pub fit: Option<RateFit>,
    /// Why the fit is absent, when it is.
    pub fit_skipped: Option<String>,
    /// `n * error / phi` at the final checkpoint: the observed constant in
    /// front of the `phi / n` asymptote.
    pub empirical_constant: Option<f64>,
}

/// A finished experiment: the full trial table, the summary that was
/// written, and (when charts were captured) the entrywise mean of
/// `T ∘ T` over trials that never left the large chart ball.
#[derive(Debug)]
pub struct ExperimentResult {
    pub rows: Vec<TrialRow>,
    pub summary: Summary,
    pub mean_chart_sq: Vec<(u64, Matrix)>,
    /// Trials contributing to `mean_chart_sq`.
    pub chart_trials_kept: usize,
}

/// Run every trial of `cfg` in parallel. The result vector is in seed
/// order; a data-mode file problem fails fast before any trial starts.
pub fn run_trials(
    cfg: &ExperimentConfig,
) -> Result<Vec<Result<TrialOutcome, HarnessError>>, HarnessError> {
    let data = match &cfg.mode {
        Mode::Data {
            path, dim, format, ..
        } => Some(Arc::new(ingest::load_samples(path, *dim, *format)?)),
        Mode::Synthetic { .. } => None,
    };
    Ok((0..cfg.repetitions)
        .into_par_iter()
        .map(|r| run_single_trial(cfg, r, data.as_ref()))
        .collect())
}

fn run_single_trial(
    cfg: &ExperimentConfig,
    r: u64,
    data: Option<&Arc<Vec<Vec<f64>>>>,
) -> Result<TrialOutcome, HarnessError> {
    let d = cfg.mode.dim();
    let p = cfg.mode.p();

    let mut seed = cfg.base_seed + r;
    let mut start_step = 0u64;
    let mut prior_hitting = engine::HittingTimes::default();
    let mut resumed: Option<OjaState> = None;
    if let Some(path) = &cfg.resume_from {
        let cp = engine::load_checkpoint(path)?;
        if cp.dim != d || cp.width != p {
            return Err(HarnessError::Validation(format!(
                "saved state is {}x{}, config wants {d}x{p}",
                cp.dim, cp.width
            )));
        }
        if cp.schedule != cfg.schedule {
            return Err(HarnessError::Validation(
                "schedule differs from the one the saved run used".into(),
            ));
        }
        if cp.normalizer != cfg.normalizer {
            return Err(HarnessError::Validation(
                "normalizer differs from the one the saved run used".into(),
            ));
        }
        if cfg.n_steps < cp.step {
            return Err(HarnessError::Validation(format!(
                "saved state is already at step {}, past the horizon {}",
                cp.step, cfg.n_steps
            )));
        }
        seed = cp.seed;
        start_step = cp.step;
        prior_hitting = cp.hitting;
        resumed = Some(cp.into_state()?);
    }
    let state = match resumed {
        Some(s) => s,
        None => engine::init_state(d, p, seed)?,
    };

    let mut source: Box<dyn SampleSource> = match (&cfg.mode, data) {
        (Mode::Synthetic { spec, .. }, _) => Box::new(SampleStream::new(spec.clone(), seed)),
        (Mode::Data { dim, .. }, Some(rows)) => Box::new(SharedSource::new(rows.clone(), *dim)),
        (Mode::Data { .. }, None) => unreachable!("data is loaded before trials start"),
    };
    if start_step > 0 {
        // Replaying the same seed past the saved step keeps the resumed
        // trajectory identical to an uninterrupted one.
        let skipped = stream::skip_samples(source.as_mut(), start_step);
        if skipped < start_step {
            return Err(engine::EngineError::StreamExhausted {
                needed: start_step,
                got: skipped,
            }
            .into());
        }
    }

    let checkpoints: Vec<u64> = if start_step == 0 {
        cfg.checkpoints.clone()
    } else {
        // Steps at or before the resume point were reported by the
        // original run.
        cfg.checkpoints.iter().copied().filter(|&n| n > start_step).collect()
    };

    let (measure, diagnostics) = match &cfg.mode {
        Mode::Synthetic { spec, .. } => (
            Some(Measurement {
                rotation: spec.rotation().cloned(),
                target_width: spec.target_width(),
            }),
            Some(DiagnosticsSpec {
                rotation: spec.rotation().cloned(),
                kappa: cfg.constants.kappa,
                entry_radius: cfg.constants.epsilon,
                mu: cfg.constants.mu,
                lambdas: spec.lambdas().to_vec(),
            }),
        ),
        Mode::Data { .. } => (None, None),
    };

    let run_cfg = RunConfig {
        schedule: &cfg.schedule,
        normalizer: cfg.normalizer,
        n_steps: cfg.n_steps - start_step,
        checkpoints: &checkpoints,
        measure: measure.as_ref(),
        diagnostics: diagnostics.as_ref(),
        capture_chart: cfg.capture_chart,
    };
    let out = engine::run(state, source.as_mut(), &run_cfg)?;

    // Events saved with the checkpoint all precede the records of this
    // segment, so a resumed run reports the same cumulative flags as an
    // uninterrupted one.
    let hitting = prior_hitting.merged(out.hitting);
    let mut rows = Vec::with_capacity(out.records.len());
    let mut charts = Vec::new();
    for rec in out.records {
        rows.push(TrialRow {
            trial_seed: seed,
            n: rec.n,
            sin2_f: rec.sin2_f,
            tan_f: rec.tan_f,
            tan_2: rec.tan_2,
            chart_tail_f: rec.chart_tail_f,
            entered: hitting.first_entry.is_some_and(|t| t <= rec.n),
            escaped: rec.escaped_by_now.unwrap_or(false) || prior_hitting.first_exit.is_some(),
            bound_violated: rec.bound_violated_by_now.unwrap_or(false)
                || prior_hitting.first_bound_violation.is_some(),
        });
        if let Some(chart) = rec.chart {
            charts.push((rec.n, chart));
        }
    }
    Ok(TrialOutcome {
        seed,
        rows,
        hitting,
        charts,
        final_state: out.state,
    })
}

fn theory_overlay(cfg: &ExperimentConfig) -> Result<Option<TheoryOverlay>, HarnessError> {
    let Mode::Synthetic {
        spec, gamma_tilde, ..
    } = &cfg.mode
    else {
        return Ok(None);
    };
    let q = spec.q().unwrap_or(spec.p());
    let rc = theory::rate_constants(
        spec.lambdas(),
        spec.p(),
        q,
        *gamma_tilde,
        cfg.n_steps.max(1),
        cfg.constants.c,
    )?;
    let trace: f64 = spec.lambdas().iter().sum();
    let b = cfg.constants.mu * trace;
    let budget_gap = gamma_tilde.unwrap_or(rc.gamma);
    let warm_up_budget = theory::cold_phase_budget(
        spec.p(),
        b,
        cfg.constants.delta,
        budget_gap,
        spec.dim(),
        cfg.constants.c_o,
    )
    .ok();
    Ok(Some(TheoryOverlay {
        rate_constants: rc,
        warm_up_budget,
        sample_norm_bound: b,
    }))
}

/// Run an experiment end to end: execute the trials, write the records
/// CSV and summary JSON into the output directory, persist the final
/// state when asked, and hand back everything for programmatic use.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    fs::create_dir_all(&cfg.output.dir)?;
    let outcomes = run_trials(cfg)?;

    let mut finished = Vec::new();
    let mut first_err = None;
    for outcome in outcomes {
        match outcome {
            Ok(o) => finished.push(o),
            Err(e) => {
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    let mut rows: Vec<TrialRow> = Vec::new();
    for o in &finished {
        rows.extend(o.rows.iter().cloned());
    }
    if let Some(e) = first_err {
        // Flush what completed; the summary would misrepresent a partial
        // table, so only the raw rows go out.
        output::write_records_csv(&cfg.output.records_path(), &rows)?;
        return Err(e);
    }

    let spec = cfg.mode.spec();
    let gap_free = spec.is_some_and(|s| s.target_width() > s.p());
    let overlay = theory_overlay(cfg)?;

    let mut by_n: BTreeMap<u64, Vec<&TrialRow>> = BTreeMap::new();
    for row in &rows {
        by_n.entry(row.n).or_default().push(row);
    }

    let mut checkpoints = Vec::with_capacity(by_n.len());
    for (&n, group) in &by_n {
        let collect = |f: fn(&TrialRow) -> f64| -> Vec<f64> { group.iter().map(|r| f(r)).collect() };
        let (sin2_f, tan_f, tan_2) = if spec.is_some() {
            (
                output::band(&collect(|r| r.sin2_f)),
                output::band(&collect(|r| r.tan_f)),
                output::band(&collect(|r| r.tan_2)),
            )
        } else {
            (None, None, None)
        };
        let chart_tail_sq = if gap_free {
            output::band(&collect(|r| r.chart_tail_f * r.chart_tail_f))
        } else {
            None
        };
        let phi_over_n = overlay
            .as_ref()
            .filter(|_| n >= 1)
            .map(|t| t.rate_constants.phi / n as f64);
        let minimax = match spec {
            Some(s) if n >= 1 => Some(
                theory::minimax_lower_bound(
                    s.lambdas(),
                    s.p(),
                    s.target_width(),
                    n,
                    cfg.constants.c,
                )?
                .value,
            ),
            _ => None,
        };
        let (envelope_fro_sq, remainder) = if cfg.envelope_overlay && n >= 1 {
            let s = spec.expect("envelope overlay is synthetic-only by validation");
            let (env, rem) = envelope_at(cfg, s.lambdas(), s.p(), n)?;
            (Some(env), Some(rem))
        } else {
            (None, None)
        };
        checkpoints.push(CheckpointStats {
            n,
            sin2_f,
            tan_f,
            tan_2,
            chart_tail_sq,
            phi_over_n,
            minimax,
            envelope_fro_sq,
            remainder,
        });
    }

    let trials = TrialCounts {
        repetitions: cfg.repetitions,
        entered: finished.iter().filter(|o| o.hitting.first_entry.is_some()).count() as u64,
        escaped: finished.iter().filter(|o| o.hitting.first_exit.is_some()).count() as u64,
        bound_violated: finished
            .iter()
            .filter(|o| o.hitting.first_bound_violation.is_some())
            .count() as u64,
    };

    // The statistic whose decay the theory predicts: the squared tail
    // chart norm for wide targets, the squared sine error otherwise.
    let fit_points: Vec<(u64, f64)> = checkpoints
        .iter()
        .filter_map(|c| {
            let b = if gap_free { c.chart_tail_sq } else { c.sin2_f };
            b.map(|b| (c.n, b.mean))
        })
        .collect();
    let warm_steps = match cfg.schedule {
        Schedule::TwoPhase { n_o, .. } => n_o,
        _ => 0,
    };
    let (fit, fit_skipped) = if spec.is_some() {
        match fit::fit_rate(&fit::burn_in(&fit_points, warm_steps)) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, Some("no ground-truth errors in data mode".into()))
    };

    let empirical_constant = match (&overlay, fit_points.last()) {
        (Some(t), Some(&(n, err))) if n >= 1 => Some(n as f64 * err / t.rate_constants.phi),
        _ => None,
    };

    // Entrywise second-moment estimate over trials that never left the
    // large chart ball, for comparison against the envelope.
    let mut mean_chart_sq = Vec::new();
    let mut chart_trials_kept = 0usize;
    if cfg.capture_chart {
        let kept: Vec<&TrialOutcome> =
            finished.iter().filter(|o| o.hitting.first_exit.is_none()).collect();
        chart_trials_kept = kept.len();
        let mut acc: BTreeMap<u64, (Matrix, usize)> = BTreeMap::new();
        for o in &kept {
            for (n, chart) in &o.charts {
                let sq = Matrix::from_fn(chart.rows(), chart.cols(), |i, j| {
                    chart[(i, j)] * chart[(i, j)]
                });
                match acc.get_mut(n) {
                    Some((sum, count)) => {
                        *sum = sum.add(&sq);
                        *count += 1;
                    }
                    None => {
                        acc.insert(*n, (sq, 1));
                    }
                }
            }
        }
        for (n, (sum, count)) in acc {
            mean_chart_sq.push((n, sum.scale(1.0 / count as f64)));
        }
    }

    let summary = Summary {
        config: cfg.echo(),
        trials,
        checkpoints,
        theory: overlay,
        fit,
        fit_skipped,
        empirical_constant,
    };

    if let Some(path) = &cfg.checkpoint_file {
        let o = finished.first().expect("repetitions >= 1");
        engine::save_checkpoint(
            path,
            &engine::Checkpoint::of(
                &o.final_state,
                &cfg.schedule,
                cfg.normalizer,
                o.seed,
                o.hitting,
            ),
        )?;
    }

    output::write_records_csv(&cfg.output.records_path(), &rows)?;
    output::write_json(&cfg.output.summary_path(), &summary)?;

    Ok(ExperimentResult {
        rows,
        summary,
        mean_chart_sq,
        chart_trials_kept,
    })
}

/// Envelope total and remainder at checkpoint `n`: the recursion is run
/// from a chart dominated entrywise by the large-ball radius, and the
/// remainder uses the warm-phase fraction as its accuracy parameter.
fn envelope_at(
    cfg: &ExperimentConfig,
    lambdas: &[f64],
    p: usize,
    n: u64,
) -> Result<(f64, f64), HarnessError> {
    let d = lambdas.len();
    let t0 = Matrix::from_fn(d - p, p, |_, _| cfg.constants.kappa);
    let h_scale = 16.0 * cfg.constants.psi4;
    let b = theory::hadamard_bound_trajectory(lambdas, p, &cfg.schedule, h_scale, n, &t0)?;
    let mut total = 0.0;
    for i in 0..b.rows() {
        for j in 0..b.cols() {
            total += b[(i, j)];
        }
    }
    let epsilon = match cfg.schedule {
        Schedule::TwoPhase { n_o, .. } => n_o as f64 / n as f64,
        _ => 0.0,
    };
    let rem = theory::remainder_term(cfg.constants.c_r, epsilon, n, d, cfg.constants.delta);
    Ok((total, rem))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config;
    use oja_core::subspace::{self, NormKind};

    fn cfg_from(text: &str) -> ExperimentConfig {
        config::from_str(text, None).unwrap()
    }

    #[test]
    fn a_zero_step_run_reports_the_initial_guess() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "[model]\nlambdas = [2.0, 1.0, 0.5]\np = 1\n\n[run]\nn_steps = 0\nbase_seed = 9\n\n[output]\ndir = {:?}\n",
            dir.path().to_str().unwrap()
        );
        let cfg = cfg_from(&text);
        let res = run_experiment(&cfg).unwrap();
        assert_eq!(res.rows.len(), 1);
        let row = &res.rows[0];
        assert_eq!((row.trial_seed, row.n), (9, 0));

        let state = engine::init_state(3, 1, 9).unwrap();
        let target = Matrix::from_fn(3, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let sin = subspace::sin_theta_norm(state.basis(), &target, NormKind::Frobenius).unwrap();
        assert!((row.sin2_f - sin * sin).abs() <= 1e-15, "{} vs {}", row.sin2_f, sin * sin);
        assert!(res.summary.fit.is_none());
        assert!(res.summary.fit_skipped.is_some());
    }

    #[test]
    fn mean_error_decays_with_the_sample_count() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "[model]\nlambdas = [2.0, 1.0]\np = 1\n\n[run]\nn_steps = 10000\nrepetitions = 50\ncheckpoints = [100, 10000]\n\n[output]\ndir = {:?}\n",
            dir.path().to_str().unwrap()
        );
        let cfg = cfg_from(&text);
        let res = run_experiment(&cfg).unwrap();
        let early = res.summary.checkpoints[0].sin2_f.unwrap().mean;
        let late = res.summary.checkpoints[1].sin2_f.unwrap().mean;
        assert!(
            late * 10.0 <= early,
            "mean error went from {early} at n=100 to {late} at n=10000"
        );
        // Overlays exist and shrink with n.
        let mm0 = res.summary.checkpoints[0].minimax.unwrap();
        let mm1 = res.summary.checkpoints[1].minimax.unwrap();
        assert!(mm1 < mm0);
    }

    #[test]
    fn identical_configs_produce_identical_bytes() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let base = "[model]\nlambdas = [3.0, 1.0, 1.0]\np = 1\n\n[run]\nn_steps = 200\nrepetitions = 4\ncheckpoints = [10, 100, 200]\n\n[normalizer]\nkind = \"deferred\"\nperiod = 7\n\n[output]\ndir = {dir}\n";
        let mut bytes = Vec::new();
        for dir in [&dir_a, &dir_b] {
            let text = base.replace("{dir}", &format!("{:?}", dir.path().to_str().unwrap()));
            let cfg = cfg_from(&text);
            run_experiment(&cfg).unwrap();
            bytes.push((
                fs::read(cfg.output.records_path()).unwrap(),
                fs::read(cfg.output.summary_path()).unwrap(),
            ));
        }
        assert_eq!(bytes[0].0, bytes[1].0, "records differ");
        assert_eq!(bytes[0].1, bytes[1].1, "summaries differ");
    }

    #[test]
    fn summary_means_match_a_brute_force_pass_over_the_rows() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "[model]\nlambdas = [4.0, 2.0, 1.0]\np = 2\n\n[run]\nn_steps = 300\nrepetitions = 7\ncheckpoints = [50, 300]\n\n[output]\ndir = {:?}\n",
            dir.path().to_str().unwrap()
        );
        let cfg = cfg_from(&text);
        let res = run_experiment(&cfg).unwrap();
        for stats in &res.summary.checkpoints {
            let values: Vec<f64> = res
                .rows
                .iter()
                .filter(|r| r.n == stats.n)
                .map(|r| r.sin2_f)
                .collect();
            assert_eq!(values.len(), 7);
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            assert_eq!(stats.sin2_f.unwrap().mean, mean);
        }
    }

    #[test]
    fn exhausted_data_flushes_finished_rows_and_reports_the_shortfall() {
        let dir = tempfile::tempdir().unwrap();
        let data_path = dir.path().join("short.csv");
        fs::write(&data_path, "1.0,0.0\n0.5,0.5\n0.0,1.0\n").unwrap();
        let text = format!(
            "[data]\npath = {:?}\ndim = 2\np = 1\n\n[run]\nn_steps = 10\nrepetitions = 2\n\n[schedule]\ngamma_ref = 1.0\n\n[output]\ndir = {:?}\n",
            data_path.to_str().unwrap(),
            dir.path().to_str().unwrap()
        );
        let cfg = cfg_from(&text);
        let err = run_experiment(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("exhausted"), "got {err}");
        // The records file exists with just its header: no trial finished.
        let text = fs::read_to_string(cfg.output.records_path()).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(!cfg.output.summary_path().exists());
    }

    #[test]
    fn data_mode_records_steps_without_inventing_errors() {
        let dir = tempfile::tempdir().unwrap();
        let data_path = dir.path().join("s.csv");
        let mut text = String::new();
        for i in 0..64 {
            text.push_str(&format!("{}.0,{}.5\n", i % 3, (i + 1) % 2));
        }
        fs::write(&data_path, text).unwrap();
        let cfg_text = format!(
            "[data]\npath = {:?}\ndim = 2\np = 1\n\n[run]\nn_steps = 64\ncheckpoints = [32, 64]\n\n[schedule]\nkind = \"constant\"\neta = 0.05\n\n[output]\ndir = {:?}\n",
            data_path.to_str().unwrap(),
            dir.path().to_str().unwrap()
        );
        let cfg = cfg_from(&cfg_text);
        let res = run_experiment(&cfg).unwrap();
        assert_eq!(res.rows.len(), 2);
        assert!(res.rows.iter().all(|r| r.sin2_f.is_nan()));
        assert!(res.summary.checkpoints.iter().all(|c| c.sin2_f.is_none()));
        assert!(res.summary.theory.is_none());
        let csv = fs::read_to_string(cfg.output.records_path()).unwrap();
        assert!(csv.lines().nth(1).unwrap().starts_with("0,32,,,"));
    }

    #[test]
    fn resuming_a_saved_run_matches_the_uninterrupted_one_bit_for_bit() {
        let dir = tempfile::tempdir().unwrap();
        let straight_cp = dir.path().join("straight.json");
        let half_cp = dir.path().join("half.json");
        let resumed_cp = dir.path().join("resumed.json");
        let base = "[model]\nlambdas = [3.0, 1.0, 0.5]\np = 1\n\n[run]\nn_steps = {n}\nbase_seed = 42\ncheckpoints = {ck}\ncheckpoint_file = {cp:?}\n{resume}\n[output]\ndir = {dir:?}\n";
        let fill = |n: &str, ck: &str, cp: &std::path::Path, resume: String, sub: &str| {
            let out = dir.path().join(sub);
            base.replace("{n}", n)
                .replace("{ck}", ck)
                .replace("{cp:?}", &format!("{:?}", cp.to_str().unwrap()))
                .replace("{resume}", &resume)
                .replace("{dir:?}", &format!("{:?}", out.to_str().unwrap()))
        };

        let straight = cfg_from(&fill("600", "[600]", &straight_cp, String::new(), "a"));
        let straight_rows = run_experiment(&straight).unwrap().rows;

        let first_half = cfg_from(&fill("300", "[300]", &half_cp, String::new(), "b"));
        run_experiment(&first_half).unwrap();

        let resumed = cfg_from(&fill(
            "600",
            "[300, 600]",
            &resumed_cp,
            format!("resume_from = {:?}\n", half_cp.to_str().unwrap()),
            "c",
        ));
        let resumed_rows = run_experiment(&resumed).unwrap().rows;

        // The checkpoint at 300 was already reported by the first half, so
        // the resumed run reports only the new one.
        assert_eq!(resumed_rows.len(), 1);
        assert_eq!(resumed_rows[0].n, 600);
        assert_eq!(resumed_rows[0].sin2_f, straight_rows[0].sin2_f);

        // This trial leaves the chart ball and trips a sample bound before
        // step 300, so the flags below prove the saved history crossed the
        // file: a fresh tracker on the second leg would drop both events.
        assert!(straight_rows[0].escaped, "model stopped exercising the flags");
        assert!(straight_rows[0].bound_violated, "model stopped exercising the flags");
        assert_eq!(resumed_rows[0].escaped, straight_rows[0].escaped);
        assert_eq!(resumed_rows[0].bound_violated, straight_rows[0].bound_violated);
        assert_eq!(resumed_rows[0].entered, straight_rows[0].entered);

        let a = engine::load_checkpoint(&straight_cp).unwrap();
        let c = engine::load_checkpoint(&resumed_cp).unwrap();
        assert_eq!(a.step, c.step);
        assert_eq!(a.basis, c.basis, "resumed basis diverged");
        assert_eq!(a.hitting, c.hitting, "hitting history diverged across the resume");
    }

    #[test]
    fn captured_charts_average_into_an_entrywise_second_moment() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "[model]\nlambdas = [4.0, 1.0, 1.0]\np = 1\n\n[run]\nn_steps = 500\nrepetitions = 6\ncheckpoints = [500]\ncapture_chart = true\n\n[output]\ndir = {:?}\nenvelope = true\n",
            dir.path().to_str().unwrap()
        );
        let cfg = cfg_from(&text);
        let res = run_experiment(&cfg).unwrap();
        assert!(res.chart_trials_kept > 0, "every trial escaped the ball");
        assert_eq!(res.mean_chart_sq.len(), 1);
        let (n, m) = &res.mean_chart_sq[0];
        assert_eq!(*n, 500);
        assert_eq!((m.rows(), m.cols()), (2, 1));
        assert!(m[(0, 0)] >= 0.0 && m[(1, 0)] >= 0.0);
        // The envelope overlay is present and positive.
        let last = res.summary.checkpoints.last().unwrap();
        assert!(last.envelope_fro_sq.unwrap() > 0.0);
        assert!(last.remainder.unwrap() == 0.0, "no warm phase, no remainder");
    }
}
