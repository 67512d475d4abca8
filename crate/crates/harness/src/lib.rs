//! Command-line harness for `ethsim-core`: scenario files, seeded parallel
//! ensembles, history-tree export, the dense oracle and the coupling-regime
//! experiments.

pub mod build;
pub mod error;
pub mod oracle;
pub mod regimes;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod tree;
pub mod validate;

pub use error::{HarnessError, Issue, Result};
pub use scenario::Scenario;

/// Largest `||Σ_r prob(r) Ω^(r) - Ω̂||_op` a run accepts on any step.
pub const MIXTURE_TOLERANCE: f64 = 1e-12;
