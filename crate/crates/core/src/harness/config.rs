use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::algorithms::{AlgorithmConfig, LocalBatch};
use crate::error::{Error, Result};
use crate::instance::InstanceSpec;

/// Seeds as an explicit list or as `count` consecutive values from `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Range {
        count: u64,
        #[serde(default)]
        base: u64,
    },
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSpec::List(v) => v.clone(),
            SeedSpec::Range { count, base } => (*base..base + count).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmKind {
    FedAvg,
    Plt,
    Sfa,
    Dichotomous,
    Selector,
}

impl AlgorithmKind {
    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::FedAvg => "fedavg",
            AlgorithmKind::Plt => "plt",
            AlgorithmKind::Sfa => "sfa",
            AlgorithmKind::Dichotomous => "dichotomous",
            AlgorithmKind::Selector => "selector",
        }
    }
}

/// One algorithm to run at every grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSpec {
    pub algorithm: AlgorithmKind,
    /// Name in the `algorithm` column; defaults to the kind.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub config: AlgorithmConfig,
    /// SoftFedAvg: pick lambda from the planted heterogeneity.
    #[serde(default)]
    pub select_lambda: bool,
    /// Dichotomous and selector: settings for the FedAvg branch.
    #[serde(default)]
    pub fedavg: Option<AlgorithmConfig>,
    /// Dichotomous and selector: settings for the local-training branch.
    #[serde(default)]
    pub plt: Option<AlgorithmConfig>,
    #[serde(default = "default_holdout")]
    pub holdout_fraction: f64,
}

fn default_holdout() -> f64 {
    0.2
}

impl AlgorithmSpec {
    pub fn new(algorithm: AlgorithmKind, config: AlgorithmConfig) -> Self {
        AlgorithmSpec {
            algorithm,
            label: None,
            config,
            select_lambda: false,
            fedavg: None,
            plt: None,
            holdout_fraction: default_holdout(),
        }
    }

    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(self.algorithm.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    /// Fresh samples per client for Monte Carlo risk.
    pub budget: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig { budget: 10_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Planted heterogeneity.
    R2,
    /// Per-client sample size, `m` fixed.
    N,
    /// Total sample size, split evenly over the `m` clients.
    Total,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// For the `r2` axis: read `values` in units of `m/N`.
    #[serde(default)]
    pub relative_to_m_over_n: bool,
}

/// Settings for the convergence diagnostics on quadratic instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticsConfig {
    pub m: usize,
    pub n: usize,
    pub d: usize,
    pub rho: f64,
    pub target_r2: f64,
    pub lambda: f64,
    pub local_batch: LocalBatch,
    /// Inner steps at which the prox error is measured.
    pub inner_steps: Vec<usize>,
    /// Rounds at which the global error is measured.
    pub outer_rounds: Vec<usize>,
    /// `(T, K_T)` pairs for the optimization error.
    pub opt_points: Vec<(usize, usize)>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            m: 4,
            n: 20,
            d: 2,
            rho: 1.0,
            target_r2: 0.5,
            lambda: 1.0,
            local_batch: LocalBatch::Size(5),
            inner_steps: vec![8, 16, 32, 64, 128, 256, 512],
            outer_rounds: vec![4, 16, 64],
            opt_points: vec![(16, 64), (64, 256)],
        }
    }
}

/// Settings for the stability experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub algorithm: AlgorithmSpec,
    /// Per-client sample sizes to sweep.
    pub n_values: Vec<usize>,
    #[serde(default)]
    pub client: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_probes")]
    pub probes: usize,
}

fn default_trials() -> usize {
    20
}

fn default_probes() -> usize {
    20
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// A full experiment description, usually read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub seeds: SeedSpec,
    pub instance: InstanceSpec,
    #[serde(default)]
    pub algorithms: Vec<AlgorithmSpec>,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub diagnostics: Option<DiagnosticsConfig>,
    #[serde(default)]
    pub stability: Option<StabilityConfig>,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub format: OutputFormat,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.as_ref().display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.seeds().is_empty() {
            return Err(Error::Config("the seed list is empty".into()));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(Error::Config("the sweep grid is empty".into()));
            }
            if s.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Config("sweep values must be finite and nonnegative".into()));
            }
            if s.axis != SweepAxis::R2 && s.values.iter().any(|v| *v < 1.0 || v.fract() != 0.0) {
                return Err(Error::Config("sample-size grids must hold positive integers".into()));
            }
        }
        for a in &self.algorithms {
            if a.algorithm == AlgorithmKind::Selector
                && !(a.holdout_fraction > 0.0 && a.holdout_fraction < 1.0)
            {
                return Err(Error::Config("holdout_fraction must lie in (0, 1)".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
experiment_id = "demo"
seeds = { count = 3, base = 10 }

[instance]
family = "quadratic"
rho = 1.5
n = [50, 50]
d = 3
target_r2 = 0.0

[instance.domain]
kind = "fitted"
margin = 0.25

[[algorithms]]
algorithm = "fedavg"
[algorithms.config]
solver = "exact"

[[algorithms]]
algorithm = "sfa"
select_lambda = true
[algorithms.config]
auto_rounds = true
local_batch = { size = 5 }

[sweep]
axis = "r2"
values = [0.0, 0.1, 1.0]
relative_to_m_over_n = true
"#;

    #[test]
    fn parses_the_documented_layout() {
        let cfg = ExperimentConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(cfg.seeds.seeds(), vec![10, 11, 12]);
        assert_eq!(cfg.algorithms.len(), 2);
        assert_eq!(cfg.algorithms[1].config.local_batch, LocalBatch::Size(5));
        assert_eq!(cfg.evaluation.budget, 10_000);
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_empty_grids_and_seeds() {
        let no_seeds = SAMPLE.replace("seeds = { count = 3, base = 10 }", "seeds = []");
        assert!(matches!(ExperimentConfig::from_toml_str(&no_seeds), Err(Error::Config(_))));
        let no_grid = SAMPLE.replace("values = [0.0, 0.1, 1.0]", "values = []");
        assert!(matches!(ExperimentConfig::from_toml_str(&no_grid), Err(Error::Config(_))));
        assert!(ExperimentConfig::from_toml_str("experiment_id = 3").is_err());
    }
}
