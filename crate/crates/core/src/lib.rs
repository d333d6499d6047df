//! Streaming principal-subspace estimation.
//!
//! The crate is organized around one pipeline: draw samples from a known
//! covariance model ([`samplers`]), feed them to a stochastic subspace
//! iteration with pluggable normalization and learning-rate schedules
//! ([`engine`]), measure how far each iterate is from the target subspace
//! ([`subspace`]), and compare the observed decay against closed-form rate
//! predictions and offline baselines ([`theory`]). Everything rests on a
//! small dense linear-algebra kernel ([`matrix`]) tuned for the tall skinny
//! matrices this problem produces.
//!
//! All randomness is counter-based ([`rand_chacha`]) and seeded explicitly,
//! so every run — including parallel Monte-Carlo sweeps — is reproducible
//! bit for bit regardless of scheduling.

pub mod engine;
pub mod matrix;
pub mod samplers;
pub mod stream;
pub mod subspace;
pub mod theory;

pub use matrix::Matrix;
pub use stream::SampleSource;
