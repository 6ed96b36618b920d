//! Training strategies: pure local training, FedAvg, two-stage SoftFedAvg,
//! and the two rules that choose between the baselines.

mod baselines;
mod hyper;
mod select;
mod soft;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{FederatedDataset, HeterogeneityMode, LossModel, ModelVector};

pub use baselines::{fed_avg, pure_local_training};
pub use hyper::{
    check_rounds, inner_rounds_for_outer_bound, required_rounds, select_lambda, LambdaEvent,
    RoundRequirements,
};
pub use select::{dichotomous_strategy, dichotomous_threshold, test_error_selector, SelectorConfig};
pub use soft::{soft_fed_avg, soft_fed_avg_traced, soft_sharing_oracle_quadratic, TraceOracle};

/// How local and global problems are solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    /// Projected minibatch SGD.
    #[default]
    Sgd,
    /// Closed-form minimizers. Quadratic family only.
    Exact,
}

/// Number of local steps in round `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StepRule {
    Fixed {
        k: usize,
    },
    /// `K_t + 1 >= c1 (lambda^2 v 1) t`, at least one step.
    Linear {
        c1: f64,
    },
    /// Enough steps for the outer-loop convergence rate, see
    /// [`inner_rounds_for_outer_bound`].
    OuterBound,
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Fixed { k: 5 }
    }
}

impl StepRule {
    pub fn steps(&self, t: usize, lambda: f64, model: &LossModel, mu: f64) -> usize {
        match *self {
            StepRule::Fixed { k } => k.max(1),
            StepRule::Linear { c1 } => hyper::linear_k(c1, lambda, t),
            StepRule::OuterBound => inner_rounds_for_outer_bound(&model.constants, mu, lambda, t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocalBatch {
    #[default]
    Full,
    Size(usize),
}

impl LocalBatch {
    pub(crate) fn for_client(&self, n: usize) -> usize {
        match *self {
            LocalBatch::Full => n,
            LocalBatch::Size(b) => b.min(n),
        }
    }
}

/// Constants left unspecified by the theory. All default to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuningConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c_a: f64,
    pub c_b: f64,
    pub c_p: f64,
}

impl Default for TuningConstants {
    fn default() -> Self {
        TuningConstants { c1: 1.0, c2: 1.0, c3: 1.0, c_a: 1.0, c_b: 1.0, c_p: 1.0 }
    }
}

/// Hyperparameters shared by all strategies. Fields a strategy does not use
/// are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlgorithmConfig {
    pub solver: Solver,
    /// Proximal weight for SoftFedAvg.
    pub lambda: f64,
    /// Communication rounds `T`.
    pub rounds: usize,
    /// Local steps per round.
    pub local_steps: StepRule,
    /// Final-stage steps `K_T` for SoftFedAvg; total steps for pure local
    /// training.
    pub final_steps: usize,
    /// Clients sampled per round. `None` means all of them.
    pub client_batch: Option<usize>,
    pub local_batch: LocalBatch,
    /// Replaces the loss model's strong convexity constant in the schedules.
    pub mu_override: Option<f64>,
    /// FedAvg server step.
    pub aggregation_step: f64,
    pub constants: TuningConstants,
    /// Derive `T`, `K_t` and `K_T` from [`required_rounds`] instead of the
    /// fields above.
    pub auto_rounds: bool,
    /// Treat violations of [`required_rounds`] as errors.
    pub strict_rounds: bool,
    /// Which variant of the round requirements to apply.
    pub mode: HeterogeneityMode,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        AlgorithmConfig {
            solver: Solver::Sgd,
            lambda: 1.0,
            rounds: 20,
            local_steps: StepRule::default(),
            final_steps: 100,
            client_batch: None,
            local_batch: LocalBatch::Full,
            mu_override: None,
            aggregation_step: 1.0,
            constants: TuningConstants::default(),
            auto_rounds: false,
            strict_rounds: false,
            mode: HeterogeneityMode::Aer,
        }
    }
}

impl AlgorithmConfig {
    pub fn exact() -> Self {
        AlgorithmConfig { solver: Solver::Exact, ..Default::default() }
    }

    pub(crate) fn mu(&self, model: &LossModel) -> f64 {
        self.mu_override.unwrap_or(model.constants.mu)
    }

    pub(crate) fn client_batch_size(&self, m: usize) -> Result<usize> {
        let b = self.client_batch.unwrap_or(m);
        if b == 0 || b > m {
            return Err(Error::Config(format!("client batch {b} must lie in 1..={m}")));
        }
        Ok(b)
    }

    pub(crate) fn require_exact_support(&self, model: &LossModel) -> Result<()> {
        if self.solver == Solver::Exact && !model.is_quadratic() {
            return Err(Error::Config("the exact solver is only available for the quadratic family".into()));
        }
        Ok(())
    }
}

/// Which baseline a selection rule picked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    FedAvg,
    PureLocal,
}

/// One row of a training trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// `|w_glob_t - oracle|^2`, when an oracle was supplied.
    pub global_dist2: Option<f64>,
    /// Per-client squared distances to the oracle locals.
    pub client_dist2: Vec<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutput {
    pub local_models: Vec<ModelVector>,
    pub global_model: Option<ModelVector>,
    pub trace: Vec<RoundRecord>,
    pub branch: Option<Branch>,
    /// Effective hyperparameters, for reporting.
    pub lambda: f64,
    pub rounds: usize,
    pub final_steps: usize,
}

impl TrainingOutput {
    pub(crate) fn new(local_models: Vec<ModelVector>, global_model: Option<ModelVector>) -> Self {
        TrainingOutput {
            local_models,
            global_model,
            trace: Vec::new(),
            branch: None,
            lambda: 0.0,
            rounds: 0,
            final_steps: 0,
        }
    }

    /// Writes the trace as CSV: `round,global_dist2,client_dist2_<i>...,wall_ms`.
    pub fn write_trace_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let m = self.trace.first().map_or(0, |r| r.client_dist2.len());
        let mut header = vec!["round".to_string(), "global_dist2".to_string()];
        header.extend((0..m).map(|i| format!("client_dist2_{i}")));
        header.push("wall_ms".into());
        out.write_record(&header)?;
        for r in &self.trace {
            let mut row = vec![r.round.to_string(), r.global_dist2.map_or(String::new(), |v| v.to_string())];
            row.extend(r.client_dist2.iter().map(|v| v.to_string()));
            row.push(r.wall_ms.to_string());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn validate_inputs(model: &LossModel, data: &FederatedDataset) -> Result<()> {
    for c in data.clients() {
        model.check_dataset(c)?;
    }
    Ok(())
}
