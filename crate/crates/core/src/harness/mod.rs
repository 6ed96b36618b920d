//! Experiment configuration, sweeps, diagnostics and result files.

mod config;
mod diagnostics;
mod output;
mod runner;
pub mod stats;

pub use config::{
    AlgorithmKind, AlgorithmSpec, DiagnosticsConfig, EvaluationConfig, ExperimentConfig, OutputFormat,
    SeedSpec, StabilityConfig, SweepAxis, SweepConfig,
};
pub use diagnostics::{
    run_convergence_diagnostics, run_stability_experiment, write_diagnostics_csv, DiagnosticKind,
    DiagnosticRow, StabilityRow, StabilityTable,
};
pub use output::{emit_json, emit_results, read_results_csv, write_ier_long, write_results, ResultRow};
pub use runner::{
    run_algorithm, run_grid, run_on_instance, run_phase_transition_sweep, run_scaling_experiment, Crossover,
    GridSummary, RunOptions, ScalingCurve, ScalingReport, SweepResult,
};

/// Runs `f` on a dedicated pool of `threads` workers (all cores when `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> crate::Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n.max(1));
    }
    let pool = b.build().map_err(|e| crate::Error::Config(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}
