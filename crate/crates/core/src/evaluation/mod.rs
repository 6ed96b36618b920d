//! Excess-risk metrics, empirical federated stability, optimization error,
//! and the convergence bounds used by the diagnostics.

mod bounds;
mod risk;
mod stability;

pub use bounds::{inner_loop_bound, optimization_error_bound, outer_loop_bound};
pub use risk::{
    optimization_error, population_excess_risk, risk_report, soft_sharing_objective, RiskEstimate,
    RiskMethod, RiskReport,
};
pub use stability::{
    federated_stability_estimate, replace_record, stability_report, StabilityEstimate, StabilityReport,
    Trainer,
};

/// Version of the JSON layout of [`RiskReport`] and [`StabilityReport`].
pub const SCHEMA_VERSION: u32 = 1;
