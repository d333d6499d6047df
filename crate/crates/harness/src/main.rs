//! The `oja` command-line experiment runner.
//!
//! Subcommands: `run` (one synthetic experiment), `sweep` (a grid of
//! them), `theory` (closed-form constants for a spectrum), `compare`
//! (online versus offline baselines), `ingest-run` (a recorded sample
//! file). Environment: `OJA_SEED` overrides the config's base seed,
//! `OJA_THREADS` caps the worker pool. Exit codes: 0 on success, 2 for
//! config/argument problems, 3 for runtime failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use oja_core::theory;
use oja_harness::config::{self, Mode};
use oja_harness::{compare, experiment, output, HarnessError};

#[derive(Parser)]
#[command(name = "oja", version, about = "Streaming principal-subspace experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one synthetic experiment from a config file.
    Run {
        /// Path to the TOML config.
        #[arg(long)]
        config: PathBuf,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Expand the [sweep] grid and run every combination.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Directory receiving one subdirectory per combination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print rate constants and the warm-up budget for a spectrum.
    Theory {
        /// Comma-separated eigenvalues, nonincreasing.
        #[arg(long, value_delimiter = ',')]
        lambdas: Vec<f64>,
        /// Width of the subspace being estimated.
        #[arg(long)]
        p: usize,
        /// Relaxed target width.
        #[arg(long)]
        q: Option<usize>,
        /// Gap threshold for the relaxed target.
        #[arg(long)]
        gamma_tilde: Option<f64>,
        /// Sample count the minimax floor is evaluated at.
        #[arg(long, default_value_t = 100_000)]
        n: u64,
        /// Minimax constant.
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        /// Sample magnitude factor; the norm bound is mu times the trace.
        #[arg(long, default_value_t = 9.0)]
        mu: f64,
        /// Confidence split for the warm-up budget.
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// Warm-up budget constant.
        #[arg(long, default_value_t = 1.0)]
        c_o: f64,
        /// Explicit sample norm bound, replacing mu times the trace.
        #[arg(long)]
        b: Option<f64>,
    },
    /// Compare the streaming estimate with offline batch baselines.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run on a recorded sample file instead of a synthetic model.
    IngestRun {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    if let Ok(text) = std::env::var("OJA_THREADS") {
        match text.parse::<usize>() {
            Ok(k) if k >= 1 => {
                // A second global-pool build (say, under tests) is harmless.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
            }
            _ => {
                eprintln!("error: OJA_THREADS must be a positive integer, got {text:?}");
                return ExitCode::from(2);
            }
        }
    }
    let seed_override = match std::env::var("OJA_SEED") {
        Ok(text) => match text.parse::<u64>() {
            Ok(seed) => Some(seed),
            Err(_) => {
                eprintln!("error: OJA_SEED must be an unsigned integer, got {text:?}");
                return ExitCode::from(2);
            }
        },
        Err(_) => None,
    };

    match dispatch(Cli::parse(), seed_override) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load(
    path: &Path,
    out: Option<PathBuf>,
    seed_override: Option<u64>,
) -> Result<config::ExperimentConfig, HarnessError> {
    let mut cfg = config::parse_config(path, seed_override)?;
    if let Some(dir) = out {
        cfg.output.dir = dir;
    }
    Ok(cfg)
}

fn dispatch(cli: Cli, seed_override: Option<u64>) -> Result<(), HarnessError> {
    match cli.cmd {
        Cmd::Run { config: path, out } => {
            let cfg = load(&path, out, seed_override)?;
            if matches!(cfg.mode, Mode::Data { .. }) {
                return Err(HarnessError::Validation(
                    "this config reads a sample file; use the ingest-run subcommand".into(),
                ));
            }
            if cfg.raw.sweep.is_some() {
                return Err(HarnessError::Validation(
                    "this config declares a [sweep]; use the sweep subcommand".into(),
                ));
            }
            let res = experiment::run_experiment(&cfg)?;
            report_run(&cfg, &res);
            Ok(())
        }
        Cmd::Sweep { config: path, out } => {
            let base = load(&path, out.clone(), seed_override)?;
            let combos = config::expand_sweep(&base.raw)?;
            let root = base.output.dir.clone();
            std::fs::create_dir_all(&root)?;
            let mut manifest = Vec::new();
            for (label, raw) in combos {
                let mut cfg = config::from_str(&toml::to_string(&raw).map_err(
                    |e| HarnessError::Validation(format!("sweep combination {label}: {e}")),
                )?, seed_override)?;
                cfg.output.dir = root.join(&label);
                let res = experiment::run_experiment(&cfg)?;
                println!("{label}: wrote {}", cfg.output.dir.display());
                manifest.push(serde_json::json!({
                    "label": label,
                    "dir": cfg.output.dir.display().to_string(),
                    "n_steps": cfg.n_steps,
                    "repetitions": cfg.repetitions,
                    "fit": res.summary.fit,
                }));
            }
            output::write_json(&root.join("manifest.json"), &manifest)?;
            println!("manifest: {}", root.join("manifest.json").display());
            Ok(())
        }
        Cmd::Theory {
            lambdas,
            p,
            q,
            gamma_tilde,
            n,
            c,
            mu,
            delta,
            c_o,
            b,
        } => {
            let q = q.unwrap_or(p);
            let rc = theory::rate_constants(&lambdas, p, q, gamma_tilde, n, c)?;
            let trace: f64 = lambdas.iter().sum();
            let bound = b.unwrap_or(mu * trace);
            let budget_gap = gamma_tilde.unwrap_or(rc.gamma);
            let budget =
                theory::cold_phase_budget(p, bound, delta, budget_gap, lambdas.len(), c_o)?;
            let text = serde_json::to_string_pretty(&serde_json::json!({
                "rate_constants": rc,
                "sample_norm_bound": bound,
                "warm_up_budget": budget,
            }))?;
            println!("{text}");
            Ok(())
        }
        Cmd::Compare { config: path, out } => {
            let cfg = load(&path, out, seed_override)?;
            let report = compare::compare_online_offline(&cfg)?;
            for row in &report.rows {
                let ratio = row
                    .ratio
                    .map(|r| format!("{r:.3}"))
                    .unwrap_or_else(|| "NA".into());
                println!(
                    "n = {}: online {:.3e}, offline {:.3e}, ratio {ratio}, minimax {:.3e}",
                    row.n, row.online_sin2_f, row.offline_sin2_f, row.minimax
                );
            }
            println!("wrote {}", cfg.output.dir.join("compare.json").display());
            Ok(())
        }
        Cmd::IngestRun { config: path, out } => {
            let cfg = load(&path, out, seed_override)?;
            if !matches!(cfg.mode, Mode::Data { .. }) {
                return Err(HarnessError::Validation(
                    "ingest-run needs a [data] table; use the run subcommand for models".into(),
                ));
            }
            let res = experiment::run_experiment(&cfg)?;
            report_run(&cfg, &res);
            Ok(())
        }
    }
}

fn report_run(cfg: &config::ExperimentConfig, res: &experiment::ExperimentResult) {
    if let Some(stats) = res.summary.checkpoints.last() {
        if let Some(band) = stats.sin2_f {
            println!(
                "final checkpoint n = {}: mean squared sine error {:.6e}",
                stats.n, band.mean
            );
        } else {
            println!("final checkpoint n = {}: recorded (no ground truth)", stats.n);
        }
    }
    match (&res.summary.fit, &res.summary.fit_skipped) {
        (Some(fit), _) => println!(
            "fitted decay: slope {:.3}, r^2 {:.4} over {} checkpoints",
            fit.slope, fit.r_squared, fit.points_used
        ),
        (None, Some(reason)) => println!("no rate fit: {reason}"),
        (None, None) => {}
    }
    println!(
        "wrote {} and {}",
        cfg.output.records_path().display(),
        cfg.output.summary_path().display()
    );
}
