//! Result emission: the records CSV and the summary JSON.
//!
//! The CSV holds one row per (trial, checkpoint) with the stable schema
//! `trial_seed,n,sin2F,tanF,tan2,scrTqF,flags`. Numeric fields use Rust's
//! shortest round-trip float formatting; non-finite values (a `+inf`
//! tangent on an escaped iterate, missing measurements on real data)
//! serialize as empty fields so spreadsheet tools do not invent numbers.
//! `flags` is a `;`-joined subset of `in` (entered the small chart ball),
//! `out` (left the large one), and `qb` (a sample magnitude bound broke),
//! each meaning "at or before this row's step". JSON output follows the
//! same convention: non-finite numbers become `null`.
//!
//! Everything here is deterministic: rows arrive sorted by seed and step,
//! floats format identically across runs, and JSON fields keep struct
//! order — identical configs produce byte-identical files.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::HarnessError;

/// One (trial, checkpoint) observation.
#[derive(Clone, Debug)]
pub struct TrialRow {
    pub trial_seed: u64,
    /// Step count at this checkpoint.
    pub n: u64,
    /// Squared Frobenius sine error (NaN when no ground truth).
    pub sin2_f: f64,
    /// Frobenius tangent error.
    pub tan_f: f64,
    /// Spectral tangent error.
    pub tan_2: f64,
    /// Tail-block chart norm, recorded for wide (gap-free) targets.
    pub chart_tail_f: f64,
    /// Entered the small chart ball at or before this step.
    pub entered: bool,
    /// Left the large chart ball at or before this step.
    pub escaped: bool,
    /// A sample magnitude bound broke at or before this step.
    pub bound_violated: bool,
}

impl TrialRow {
    /// The `flags` field: `;`-joined tokens in fixed order.
    pub fn flags(&self) -> String {
        let mut tokens = Vec::new();
        if self.entered {
            tokens.push("in");
        }
        if self.escaped {
            tokens.push("out");
        }
        if self.bound_violated {
            tokens.push("qb");
        }
        tokens.join(";")
    }
}

fn float_field(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

/// Write the records CSV (header plus one line per row).
pub fn write_records_csv(path: &Path, rows: &[TrialRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["trial_seed", "n", "sin2F", "tanF", "tan2", "scrTqF", "flags"])?;
    for r in rows {
        w.write_record([
            r.trial_seed.to_string(),
            r.n.to_string(),
            float_field(r.sin2_f),
            float_field(r.tan_f),
            float_field(r.tan_2),
            float_field(r.chart_tail_f),
            r.flags(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Serialize `value` as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Mean and central 90% band of one error statistic at one checkpoint.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Band {
    pub mean: f64,
    pub p5: f64,
    pub p95: f64,
}

/// Aggregate values into a [`Band`]. The mean is unconditional, so one
/// non-finite trial makes it non-finite (reported as `null` downstream)
/// rather than silently conditioning the estimate. Percentiles use the
/// nearest-rank rule on an ascending total order with NaN sorted last.
pub fn band(values: &[f64]) -> Option<Band> {
    if values.is_empty() {
        return None;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(Band {
        mean,
        p5: nearest_rank(&sorted, 0.05),
        p95: nearest_rank(&sorted, 0.95),
    })
}

fn nearest_rank(sorted: &[f64], quantile: f64) -> f64 {
    let m = sorted.len();
    let rank = (quantile * m as f64).ceil() as usize;
    sorted[rank.clamp(1, m) - 1]
}
