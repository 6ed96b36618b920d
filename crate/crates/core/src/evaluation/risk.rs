use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algorithms::TrainingOutput;
use crate::error::{check_dim, invalid, Result};
use crate::instance::loss::{sigmoid, softplus};
use crate::instance::{FederatedDataset, LossKind, LossModel, ModelVector, ProblemInstance};
use crate::linalg::{dist2, dot};
use crate::rng::{stream, Purpose};

/// An excess-risk value with its Monte Carlo standard error (zero when exact).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub value: f64,
    pub stderr: f64,
}

/// `E[l(w, Z) - l(w_i*, Z)]` for a fresh record of client `i`.
///
/// Exact for the quadratic family (`0.5 |w - theta_i|^2`). For the logistic
/// family the feature expectation is estimated from `budget` fresh draws and
/// the label expectation is taken in closed form. Draws come from the
/// `(seed, Evaluation, i)` stream, so different models evaluated with the
/// same seed see the same features.
pub fn population_excess_risk(
    instance: &ProblemInstance,
    i: usize,
    w: &[f64],
    budget: usize,
    seed: u64,
) -> Result<RiskEstimate> {
    if i >= instance.num_clients() {
        return Err(invalid(format!("client {i} out of range")));
    }
    check_dim(instance.dim(), w.len())?;
    let w_star = &instance.true_optima[i];
    match instance.loss.kind {
        LossKind::Quadratic { .. } => Ok(RiskEstimate { value: 0.5 * dist2(w, w_star), stderr: 0.0 }),
        LossKind::Logistic { c_x, features } => {
            if budget == 0 {
                return Err(invalid("Monte Carlo evaluation needs a positive budget"));
            }
            let mut rng = stream(seed, Purpose::Evaluation, i as u64, 0);
            let mut x = vec![0.0; w.len()];
            let (mut sum, mut sum2) = (0.0, 0.0);
            for _ in 0..budget {
                for xj in x.iter_mut() {
                    *xj = match features {
                        crate::instance::FeatureDist::Uniform => rng.random_range(-c_x..=c_x),
                        crate::instance::FeatureDist::Rademacher => {
                            if rng.random::<bool>() {
                                c_x
                            } else {
                                -c_x
                            }
                        }
                    };
                }
                let q = sigmoid(dot(&x, w_star));
                let expected = |u: f64| q * softplus(-u) + (1.0 - q) * softplus(u);
                let diff = expected(dot(&x, w)) - expected(dot(&x, w_star));
                sum += diff;
                sum2 += diff * diff;
            }
            let n = budget as f64;
            let mean = sum / n;
            let var = if budget > 1 { ((sum2 - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
            Ok(RiskEstimate { value: mean, stderr: (var / n).sqrt() })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RiskMethod {
    Exact,
    /// `stderr` is the standard error of the AER estimate.
    MonteCarlo {
        fresh_samples: usize,
        stderr: f64,
    },
}

/// Individualized and averaged excess risks of one trained output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub schema_version: u32,
    pub per_client_ier: Vec<f64>,
    /// Weighted by `n_i / N`.
    pub aer: f64,
    /// Weighted by the supplied `p`.
    pub aer_p: f64,
    pub method: RiskMethod,
}

impl RiskReport {
    pub fn ier_max(&self) -> f64 {
        self.per_client_ier.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn stderr(&self) -> f64 {
        match self.method {
            RiskMethod::Exact => 0.0,
            RiskMethod::MonteCarlo { stderr, .. } => stderr,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn risk_report(
    instance: &ProblemInstance,
    data: &FederatedDataset,
    output: &TrainingOutput,
    p: &[f64],
    budget: usize,
    seed: u64,
) -> Result<RiskReport> {
    let m = instance.num_clients();
    if output.local_models.len() != m || data.num_clients() != m || p.len() != m {
        return Err(invalid("output, data, weights and instance disagree on the number of clients"));
    }
    let est = output
        .local_models
        .iter()
        .enumerate()
        .map(|(i, w)| population_excess_risk(instance, i, w, budget, seed))
        .collect::<Result<Vec<_>>>()?;
    let nw = data.size_weights();
    let per_client_ier: Vec<f64> = est.iter().map(|e| e.value).collect();
    let aer = per_client_ier.iter().zip(&nw).map(|(v, w)| v * w).sum();
    let aer_p = per_client_ier.iter().zip(p).map(|(v, w)| v * w).sum();
    let method = if instance.loss.is_quadratic() {
        RiskMethod::Exact
    } else {
        let var: f64 = est.iter().zip(&nw).map(|(e, w)| (w * e.stderr).powi(2)).sum();
        RiskMethod::MonteCarlo { fresh_samples: budget, stderr: var.sqrt() }
    };
    Ok(RiskReport { schema_version: super::SCHEMA_VERSION, per_client_ier, aer, aer_p, method })
}

/// `sum_i p_i [L_i(w_i) + (lambda/2) |w_glob - w_i|^2]`.
pub fn soft_sharing_objective(
    model: &LossModel,
    data: &FederatedDataset,
    global: &[f64],
    locals: &[ModelVector],
    lambda: f64,
    p: &[f64],
) -> Result<f64> {
    if locals.len() != data.num_clients() || p.len() != locals.len() {
        return Err(invalid("need one local model and weight per client"));
    }
    let mut total = 0.0;
    for ((c, w), pi) in data.clients().iter().zip(locals).zip(p) {
        total += pi * (crate::instance::local_erm(model, w, c)? + 0.5 * lambda * dist2(global, w));
    }
    Ok(total)
}

/// Objective gap of `output` over the reference minimizer `oracle`, clamped
/// at zero.
pub fn optimization_error(
    model: &LossModel,
    data: &FederatedDataset,
    output: &TrainingOutput,
    lambda: f64,
    p: &[f64],
    oracle: (&[f64], &[ModelVector]),
) -> Result<f64> {
    let global =
        output.global_model.as_ref().ok_or_else(|| invalid("optimization error needs a global model"))?;
    let got = soft_sharing_objective(model, data, global, &output.local_models, lambda, p)?;
    let best = soft_sharing_objective(model, data, oracle.0, oracle.1, lambda, p)?;
    Ok((got - best).max(0.0))
}
