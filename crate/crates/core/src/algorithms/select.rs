use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{fed_avg, pure_local_training, AlgorithmConfig, Branch, TrainingOutput};
use crate::error::{invalid, Result};
use crate::instance::{ClientDataset, FederatedDataset, LossModel};
use crate::rng::{stream, Purpose};

/// `|l|_inf / (mu N / m)`, the heterogeneity level below which FedAvg is
/// preferred.
pub fn dichotomous_threshold(model: &LossModel, data: &FederatedDataset, mu: f64) -> f64 {
    let n = data.total_points() as f64;
    let m = data.num_clients() as f64;
    model.constants.loss_sup / (mu * n / m)
}

/// Runs FedAvg when `r2` is at most [`dichotomous_threshold`], pure local
/// training otherwise. The branch is recorded on the output.
pub fn dichotomous_strategy(
    model: &LossModel,
    data: &FederatedDataset,
    r2: f64,
    fedavg: &AlgorithmConfig,
    plt: &AlgorithmConfig,
    seed: u64,
) -> Result<TrainingOutput> {
    if !(r2 >= 0.0 && r2.is_finite()) {
        return Err(invalid(format!("R^2 must be finite and nonnegative, got {r2}")));
    }
    let mu = fedavg.mu(model);
    let (mut out, branch) = if r2 <= dichotomous_threshold(model, data, mu) {
        (fed_avg(model, data, fedavg, seed)?, Branch::FedAvg)
    } else {
        (pure_local_training(model, data, plt, seed)?, Branch::PureLocal)
    };
    out.branch = Some(branch);
    Ok(out)
}

/// Settings for [`test_error_selector`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectorConfig {
    /// Share of each client's records held out, rounded, and kept within
    /// `1..n_i`.
    pub holdout_fraction: f64,
    pub fedavg: AlgorithmConfig,
    pub plt: AlgorithmConfig,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig {
            holdout_fraction: 0.2,
            fedavg: AlgorithmConfig::default(),
            plt: AlgorithmConfig::default(),
        }
    }
}

fn split(
    data: &FederatedDataset,
    fraction: f64,
    seed: u64,
) -> Result<(FederatedDataset, Vec<ClientDataset>)> {
    let mut train = Vec::new();
    let mut held = Vec::new();
    for (i, c) in data.clients().iter().enumerate() {
        let n = c.len();
        if n < 2 {
            return Err(invalid(format!("client {i} needs at least two records to hold some out")));
        }
        let k = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut stream(seed, Purpose::Holdout, i as u64, 0));
        let pick = |ix: &[usize]| ix.iter().map(|&j| c.points[j].clone()).collect::<Vec<_>>();
        held.push(ClientDataset::new(c.client_id, pick(&idx[..k]))?);
        train.push(ClientDataset::new(c.client_id, pick(&idx[k..]))?);
    }
    Ok((FederatedDataset::with_weights(train, data.weights().to_vec())?, held))
}

fn held_out_error(model: &LossModel, out: &TrainingOutput, held: &[ClientDataset], p: &[f64]) -> f64 {
    out.local_models
        .iter()
        .zip(held)
        .zip(p)
        .map(|((w, h), pi)| {
            let total: f64 = h.points.iter().map(|z| model.loss_unchecked(w, z)).sum();
            pi * total / h.len() as f64
        })
        .sum()
}

/// Trains both baselines on a per-client split, keeps the one with the lower
/// `p`-weighted held-out loss (FedAvg on ties), and retrains it on all data.
pub fn test_error_selector(
    model: &LossModel,
    data: &FederatedDataset,
    config: &SelectorConfig,
    seed: u64,
) -> Result<TrainingOutput> {
    if !(config.holdout_fraction > 0.0 && config.holdout_fraction < 1.0) {
        return Err(invalid("holdout fraction must lie strictly between 0 and 1"));
    }
    let (train, held) = split(data, config.holdout_fraction, seed)?;
    let p = data.weights();
    let fa = fed_avg(model, &train, &config.fedavg, seed)?;
    let pl = pure_local_training(model, &train, &config.plt, seed)?;
    let branch = if held_out_error(model, &fa, &held, p) <= held_out_error(model, &pl, &held, p) {
        Branch::FedAvg
    } else {
        Branch::PureLocal
    };
    let mut out = match branch {
        Branch::FedAvg => fed_avg(model, data, &config.fedavg, seed)?,
        Branch::PureLocal => pure_local_training(model, data, &config.plt, seed)?,
    };
    out.branch = Some(branch);
    Ok(out)
}
