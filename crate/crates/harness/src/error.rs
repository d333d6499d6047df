//! Error taxonomy for the experiment runner.
//!
//! Failures split into two classes that map onto the process exit codes:
//! problems the user can fix by editing the config file or command line
//! (exit code 2) and runtime problems — IO, exhausted data, numerics —
//! that appear only while an experiment is executing (exit code 3).

use oja_core::engine::EngineError;
use oja_core::matrix::MatrixError;
use oja_core::samplers::SamplerError;
use oja_core::subspace::SubspaceError;
use oja_core::theory::TheoryError;
use thiserror::Error;

/// Everything that can go wrong while parsing a config or driving an
/// experiment.
#[derive(Debug, Error)]
pub enum HarnessError {
    /// Malformed config text; the message carries the parser's line/column
    /// information.
    #[error("config parse: {0}")]
    Parse(String),
    /// Structurally valid config with inadmissible values; the message
    /// names the violated rule.
    #[error("config validation: {0}")]
    Validation(String),
    /// Malformed or inconsistent sample file.
    #[error("ingest: {0}")]
    Ingest(String),
    /// A log-log fit needs at least three usable checkpoints.
    #[error("rate fit needs at least 3 usable points, got {0}")]
    TooFewPoints(usize),
    /// Log-log fits work on positive finite means only.
    #[error("rate fit: unusable mean error {value} at checkpoint {n}")]
    NonPositiveError { n: u64, value: f64 },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Subspace(#[from] SubspaceError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// Process exit code for this failure: 2 when the config or arguments
    /// are at fault, 3 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Parse(_) | HarnessError::Validation(_) => 2,
            HarnessError::Engine(EngineError::BadConfig(_)) => 2,
            HarnessError::Sampler(_) => 2,
            HarnessError::Theory(TheoryError::BadInput(_))
            | HarnessError::Theory(TheoryError::GapViolation(_)) => 2,
            _ => 3,
        }
    }
}
