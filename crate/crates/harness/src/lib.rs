//! Experiment runner for the streaming subspace estimator.
//!
//! The library side of the `oja` binary: config parsing and validation
//! ([`config`]), parallel Monte-Carlo execution with CSV/JSON emission
//! ([`experiment`]), online-versus-offline baselines ([`compare`]),
//! sample-file ingestion and export ([`ingest`]), log-log rate fitting
//! ([`fit`]), and the output formats themselves ([`output`]). Every piece
//! is deterministic given a config: identical inputs produce byte-identical
//! outputs, parallelism included.

pub mod compare;
pub mod config;
pub mod error;
pub mod experiment;
pub mod fit;
pub mod ingest;
pub mod output;

pub use config::{parse_config, ExperimentConfig};
pub use error::HarnessError;
pub use experiment::{run_experiment, ExperimentResult};
