//! Experiment configuration, replicated sweeps and convergence diagnostics.

pub mod config;
pub mod diagnostics;
pub mod sweep;

pub use config::{AlgorithmSpec, ConfigError, ExperimentConfig, FitConfig, ModelKind, RunSettings};
pub use diagnostics::{rolling_norm_diagnostic, DiagnosticError, DiagnosticSeries};
pub use sweep::{run_replicates, run_replicates_with, HarnessError, RunOutput, SummaryRow, SweepOutcome};
