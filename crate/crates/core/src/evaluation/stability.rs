use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algorithms::TrainingOutput;
use crate::error::{invalid, Result};
use crate::instance::{ClientDataset, DataPoint, FederatedDataset, ProblemInstance};
use crate::rng::{stream, Purpose};

/// Anything that maps a dataset and a seed to trained models.
///
/// Implemented for every `Fn(&FederatedDataset, u64) -> Result<TrainingOutput>`.
pub trait Trainer {
    fn train(&self, data: &FederatedDataset, seed: u64) -> Result<TrainingOutput>;
}

impl<F> Trainer for F
where
    F: Fn(&FederatedDataset, u64) -> Result<TrainingOutput>,
{
    fn train(&self, data: &FederatedDataset, seed: u64) -> Result<TrainingOutput> {
        self(data, seed)
    }
}

/// Copy of `data` with record `j` of client `i` replaced by `z`.
pub fn replace_record(data: &FederatedDataset, i: usize, j: usize, z: DataPoint) -> Result<FederatedDataset> {
    let c = data.client(i);
    if j >= c.len() {
        return Err(invalid(format!("record {j} out of range for client {i}")));
    }
    let mut points = c.points.clone();
    points[j] = z;
    data.replace_client(i, ClientDataset::new(c.client_id, points)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityEstimate {
    /// Largest observed loss change. A lower bound on the true stability.
    pub gamma: f64,
    pub trials: usize,
    pub probe_points: usize,
}

/// Empirical federated stability of client `i`.
///
/// Trains once on `data` and once per trial on a copy where one uniformly
/// chosen record of client `i` is replaced by a fresh draw from its
/// distribution; every run uses `train_seed`. The estimate is the largest
/// `|l(w_i, z) - l(w_i', z)|` over all trials and probe points, where the
/// probes are `probe_count` fresh draws plus the client's own records.
///
/// Trial `k` always uses the same replacement, whatever the trial count, so
/// the estimate can only grow as trials are added.
#[allow(clippy::too_many_arguments)]
pub fn federated_stability_estimate<T: Trainer + ?Sized>(
    trainer: &T,
    instance: &ProblemInstance,
    data: &FederatedDataset,
    i: usize,
    trials: usize,
    probe_count: usize,
    seed: u64,
    train_seed: u64,
) -> Result<StabilityEstimate> {
    if i >= data.num_clients() {
        return Err(invalid(format!("client {i} out of range")));
    }
    let n_i = data.client(i).len();
    if n_i < 1 {
        return Err(invalid("client needs at least one record"));
    }
    let model = &instance.loss;
    let base = trainer.train(data, train_seed)?;
    let w = base.local_models.get(i).ok_or_else(|| invalid("trainer returned too few models"))?.clone();
    let mut probe_rng = stream(seed, Purpose::Probe, i as u64, 0);
    let mut probes: Vec<DataPoint> =
        (0..probe_count).map(|_| instance.sample_point(i, &mut probe_rng)).collect();
    probes.extend(data.client(i).points.iter().cloned());
    let base_loss: Vec<f64> = probes.iter().map(|z| model.loss_unchecked(&w, z)).collect();
    let mut gamma: f64 = 0.0;
    for k in 0..trials {
        let mut rng = stream(seed, Purpose::Stability, i as u64, k as u64);
        let j = rng.random_range(0..n_i);
        let z_new = instance.sample_point(i, &mut rng);
        let perturbed = replace_record(data, i, j, z_new)?;
        let out = trainer.train(&perturbed, train_seed)?;
        let w2 = &out.local_models[i];
        for (z, l0) in probes.iter().zip(&base_loss) {
            gamma = gamma.max((model.loss_unchecked(w2, z) - l0).abs());
        }
    }
    Ok(StabilityEstimate { gamma, trials, probe_points: probes.len() })
}

/// Stability estimates for every client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub schema_version: u32,
    pub per_client_gamma: Vec<f64>,
    pub trials: usize,
    pub probe_points: usize,
    /// `"exact"` or `"sgd"`.
    pub retrain_mode: String,
}

impl StabilityReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn stability_report<T: Trainer + ?Sized>(
    trainer: &T,
    instance: &ProblemInstance,
    data: &FederatedDataset,
    trials: usize,
    probe_count: usize,
    seed: u64,
    train_seed: u64,
    retrain_mode: &str,
) -> Result<StabilityReport> {
    let mut per_client_gamma = Vec::with_capacity(data.num_clients());
    let mut probe_points = 0;
    for i in 0..data.num_clients() {
        let e =
            federated_stability_estimate(trainer, instance, data, i, trials, probe_count, seed, train_seed)?;
        per_client_gamma.push(e.gamma);
        probe_points = probe_points.max(e.probe_points);
    }
    Ok(StabilityReport {
        schema_version: super::SCHEMA_VERSION,
        per_client_gamma,
        trials,
        probe_points,
        retrain_mode: retrain_mode.to_string(),
    })
}
