//! Online-versus-offline comparison.
//!
//! For each checkpoint `n`, the streaming estimator's mean squared sine
//! error at step `n` is set against the error of batch PCA on an
//! independent fresh batch of `n` samples — fresh so the two estimates are
//! independent and their ratio is a clean constant-factor read — and both
//! are set against the minimax floor at that sample count. Offline batch
//! seeds are offset past every online trial seed, so no stream is reused.
//!
//! The `0/0` case (both errors exactly zero, possible only when the data
//! carries no noise at all) is reported as a missing ratio — `null` in
//! JSON, an empty CSV field — never as a number.

use std::fs;

use oja_core::matrix::Matrix;
use oja_core::samplers::SampleStream;
use oja_core::subspace::{self, NormKind};
use oja_core::theory;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, Mode};
use crate::error::HarnessError;
use crate::experiment;

/// One checkpoint of the comparison table.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CompareRow {
    pub n: u64,
    /// Mean squared Frobenius sine error of the streaming estimate.
    pub online_sin2_f: f64,
    /// Mean squared Frobenius sine error of batch PCA on fresh samples.
    pub offline_sin2_f: f64,
    /// `online / offline`; absent when both are exactly zero.
    pub ratio: Option<f64>,
    /// Minimax floor at this sample count.
    pub minimax: f64,
    pub online_over_minimax: f64,
    pub offline_over_minimax: f64,
}

/// The comparison report written to `compare.json`.
#[derive(Debug, Serialize)]
pub struct CompareReport {
    pub config: serde_json::Value,
    pub rows: Vec<CompareRow>,
}

fn ratio_of(online: f64, offline: f64) -> Option<f64> {
    if online == 0.0 && offline == 0.0 {
        None
    } else {
        Some(online / offline)
    }
}

/// Run the comparison: online trials as configured, an independent
/// offline batch per (checkpoint, trial), aggregation, and emission of
/// `compare.csv` and `compare.json` (plus the usual records CSV of the
/// online trials) into the output directory.
pub fn compare_online_offline(cfg: &ExperimentConfig) -> Result<CompareReport, HarnessError> {
    let Mode::Synthetic { spec, .. } = &cfg.mode else {
        return Err(HarnessError::Validation(
            "the comparison needs a synthetic model: offline error requires ground truth".into(),
        ));
    };
    if cfg.resume_from.is_some() {
        return Err(HarnessError::Validation(
            "the comparison runs from scratch; resume_from does not apply".into(),
        ));
    }
    fs::create_dir_all(&cfg.output.dir)?;

    let outcomes = experiment::run_trials(cfg)?;
    let mut rows = Vec::new();
    for outcome in outcomes {
        rows.extend(outcome?.rows);
    }
    crate::output::write_records_csv(&cfg.output.records_path(), &rows)?;

    let d = spec.dim();
    let p = spec.p();
    let q = spec.target_width();
    let target = match spec.rotation() {
        Some(rot) => rot.block(0, d, 0, q),
        None => Matrix::from_fn(d, q, |i, j| if i == j { 1.0 } else { 0.0 }),
    };

    let reps = cfg.repetitions;
    let live_checkpoints: Vec<(usize, u64)> = cfg
        .checkpoints
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, n)| n >= 1)
        .collect();

    // One fresh batch per (checkpoint, trial); seeds start past every
    // online trial seed and never collide across checkpoints.
    let mut jobs = Vec::with_capacity(live_checkpoints.len() * reps as usize);
    for &(k, n) in &live_checkpoints {
        for r in 0..reps {
            jobs.push((k, n, cfg.base_seed + reps * (k as u64 + 1) + r));
        }
    }
    let offline_errors: Vec<Result<(usize, f64), HarnessError>> = jobs
        .par_iter()
        .map(|&(k, n, seed)| {
            let mut stream = SampleStream::new(spec.clone(), seed);
            let batch = theory::offline_pca(&mut stream, n, p)?;
            let s = subspace::sin_theta_norm(&batch.basis, &target, NormKind::Frobenius)?;
            Ok((k, s * s))
        })
        .collect();

    let mut offline_by_k: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    for res in offline_errors {
        let (k, err) = res?;
        offline_by_k.entry(k).or_default().push(err);
    }

    let mut table = Vec::with_capacity(live_checkpoints.len());
    for &(k, n) in &live_checkpoints {
        let online: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.sin2_f).collect();
        let online_mean = online.iter().sum::<f64>() / online.len().max(1) as f64;
        let offline = &offline_by_k[&k];
        let offline_mean = offline.iter().sum::<f64>() / offline.len() as f64;
        let minimax =
            theory::minimax_lower_bound(spec.lambdas(), p, q, n, cfg.constants.c)?.value;
        table.push(CompareRow {
            n,
            online_sin2_f: online_mean,
            offline_sin2_f: offline_mean,
            ratio: ratio_of(online_mean, offline_mean),
            minimax,
            online_over_minimax: online_mean / minimax,
            offline_over_minimax: offline_mean / minimax,
        });
    }

    write_compare_csv(cfg, &table)?;
    let report = CompareReport {
        config: cfg.echo(),
        rows: table,
    };
    crate::output::write_json(&cfg.output.dir.join("compare.json"), &report)?;
    Ok(report)
}

fn write_compare_csv(cfg: &ExperimentConfig, table: &[CompareRow]) -> Result<(), HarnessError> {
    let field = |v: f64| if v.is_finite() { format!("{v}") } else { String::new() };
    let mut w = csv::Writer::from_path(cfg.output.dir.join("compare.csv"))?;
    w.write_record([
        "n",
        "onlineSin2F",
        "offlineSin2F",
        "ratio",
        "minimax",
        "onlineOverMinimax",
        "offlineOverMinimax",
    ])?;
    for row in table {
        w.write_record([
            row.n.to_string(),
            field(row.online_sin2_f),
            field(row.offline_sin2_f),
            row.ratio.map(field).unwrap_or_default(),
            field(row.minimax),
            field(row.online_over_minimax),
            field(row.offline_over_minimax),
        ])?;
    }
    w.flush()?;
    Ok(())
}
