//! Loss models, problem instances with known optima, and generators for
//! federated datasets with a prescribed level of heterogeneity.

mod generate;
pub(crate) mod loss;
mod serialize;

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::optim::ProjectionDomain;

pub use generate::{
    generate_assouad_instance, generate_instance, generate_logistic_instance, generate_quadratic_instance,
    sample_dataset, DomainChoice, Family, InstanceSpec,
};
pub use loss::{
    average_global_model, empirical_hessian_min_eig, feature_second_moment_min_eig, heterogeneity_r2,
    local_erm, logistic_constants, loss_grad, loss_value, LogisticConstants,
};
pub use serialize::{read_instance, read_models, write_instance, write_models, ModelSet};

/// A point in model space.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelVector(pub Vec<f64>);

impl ModelVector {
    pub fn zeros(dim: usize) -> Self {
        ModelVector(vec![0.0; dim])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ModelVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ModelVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ModelVector {
    fn from(v: Vec<f64>) -> Self {
        ModelVector(v)
    }
}

impl From<&[f64]> for ModelVector {
    fn from(v: &[f64]) -> Self {
        ModelVector(v.to_vec())
    }
}

/// Binary label for the logistic family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Neg,
    Pos,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Pos => 1.0,
            Label::Neg => -1.0,
        }
    }
}

/// One record of a client dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DataPoint {
    /// Feature vector with a sign label (logistic family).
    Labeled { x: Vec<f64>, y: Label },
    /// A raw observation (quadratic family).
    Plain { z: Vec<f64> },
}

impl DataPoint {
    pub fn dim(&self) -> usize {
        match self {
            DataPoint::Labeled { x, .. } => x.len(),
            DataPoint::Plain { z } => z.len(),
        }
    }

    fn is_labeled(&self) -> bool {
        matches!(self, DataPoint::Labeled { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientDataset {
    pub client_id: usize,
    pub points: Vec<DataPoint>,
}

impl ClientDataset {
    pub fn new(client_id: usize, points: Vec<DataPoint>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(invalid(format!("client {client_id} has no data points")));
        };
        let (dim, labeled) = (first.dim(), first.is_labeled());
        if points.iter().any(|p| p.dim() != dim || p.is_labeled() != labeled) {
            return Err(invalid(format!("client {client_id} mixes point variants or dimensions")));
        }
        Ok(ClientDataset { client_id, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    /// Sample mean of the observations. Only meaningful for the quadratic family.
    pub fn plain_mean(&self) -> Result<ModelVector> {
        let mut acc = vec![0.0; self.dim()];
        for p in &self.points {
            match p {
                DataPoint::Plain { z } => crate::linalg::axpy(1.0, z, &mut acc),
                DataPoint::Labeled { .. } => return Err(invalid("sample mean requested for labeled data")),
            }
        }
        let inv = 1.0 / self.len() as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
        Ok(ModelVector(acc))
    }
}

/// Client datasets together with the importance weights `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct FederatedDataset {
    clients: Vec<ClientDataset>,
    weights: Vec<f64>,
}

impl FederatedDataset {
    /// Builds a dataset weighted by sample size, `p_i = n_i / N`.
    pub fn new(clients: Vec<ClientDataset>) -> Result<Self> {
        let total: usize = clients.iter().map(|c| c.len()).sum();
        let weights = clients.iter().map(|c| c.len() as f64 / total.max(1) as f64).collect();
        Self::with_weights(clients, weights)
    }

    pub fn with_weights(clients: Vec<ClientDataset>, weights: Vec<f64>) -> Result<Self> {
        if clients.is_empty() {
            return Err(invalid("federated dataset needs at least one client"));
        }
        if weights.len() != clients.len() {
            return Err(invalid(format!("{} weights supplied for {} clients", weights.len(), clients.len())));
        }
        validate_weights(&weights)?;
        let dim = clients[0].dim();
        if clients.iter().any(|c| c.dim() != dim) {
            return Err(invalid("clients disagree on dimension"));
        }
        Ok(FederatedDataset { clients, weights })
    }

    pub fn clients(&self) -> &[ClientDataset] {
        &self.clients
    }

    pub fn client(&self, i: usize) -> &ClientDataset {
        &self.clients[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    /// N, the total number of records.
    pub fn total_points(&self) -> usize {
        self.clients.iter().map(|c| c.len()).sum()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clients.iter().map(|c| c.len()).collect()
    }

    pub fn dim(&self) -> usize {
        self.clients[0].dim()
    }

    /// `n_i / N` for every client, independent of the importance weights.
    pub fn size_weights(&self) -> Vec<f64> {
        let n = self.total_points() as f64;
        self.clients.iter().map(|c| c.len() as f64 / n).collect()
    }

    /// Replaces one client's data, keeping the weights.
    pub fn replace_client(&self, i: usize, data: ClientDataset) -> Result<Self> {
        let mut clients = self.clients.clone();
        clients[i] = data;
        Self::with_weights(clients, self.weights.clone())
    }
}

pub(crate) fn validate_weights(p: &[f64]) -> Result<()> {
    if p.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(invalid("weights must be finite and nonnegative"));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("weights must sum to 1, got {s}")));
    }
    Ok(())
}

/// Distribution of each feature coordinate in the logistic family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureDist {
    /// Uniform on `[-c_x, c_x]`.
    #[default]
    Uniform,
    /// `±c_x` with equal probability.
    Rademacher,
}

impl FeatureDist {
    /// `E[x_j^2]` for a coordinate bounded by `c_x`.
    pub fn second_moment(self, c_x: f64) -> f64 {
        match self {
            FeatureDist::Uniform => c_x * c_x / 3.0,
            FeatureDist::Rademacher => c_x * c_x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LossKind {
    /// `log(1 + exp(-y x.w))` with features bounded by `c_x`.
    Logistic { c_x: f64, features: FeatureDist },
    /// `0.5 |w - z|^2` with observations on a sphere of radius `rho`.
    Quadratic { rho: f64 },
}

/// Regularity constants of a loss over its domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// Strong convexity.
    pub mu: f64,
    /// Smoothness.
    pub beta: f64,
    /// Sup of the loss over the domain and the data support.
    pub loss_sup: f64,
    /// Gradient variance at the optimum.
    pub sigma2: f64,
    pub diameter: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossModel {
    pub kind: LossKind,
    pub domain: ProjectionDomain,
    pub constants: Constants,
}

impl LossModel {
    /// Quadratic loss on `domain`; `mu = beta = 1`.
    pub fn quadratic(rho: f64, domain: ProjectionDomain) -> Result<Self> {
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(invalid(format!("support radius must be nonnegative, got {rho}")));
        }
        let d = domain.diameter();
        let constants = Constants {
            mu: 1.0,
            beta: 1.0,
            loss_sup: 0.5 * (d + rho) * (d + rho),
            sigma2: rho * rho,
            diameter: d,
        };
        Ok(LossModel { kind: LossKind::Quadratic { rho }, domain, constants })
    }

    /// Logistic loss on `domain`. The strong convexity constant is
    /// `mu0 * E[x_j^2]`, a lower bound on the population Hessian.
    pub fn logistic(c_x: f64, features: FeatureDist, domain: ProjectionDomain) -> Result<Self> {
        let dim = domain.dim();
        let lc = logistic_constants(c_x, dim, domain.diameter())?;
        let constants = Constants {
            mu: lc.mu0 * features.second_moment(c_x),
            beta: lc.beta,
            loss_sup: lc.loss_sup,
            sigma2: lc.sigma2,
            diameter: domain.diameter(),
        };
        Ok(LossModel { kind: LossKind::Logistic { c_x, features }, domain, constants })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.kind, LossKind::Quadratic { .. })
    }
}

/// Whether heterogeneity is measured on average or in the worst case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeterogeneityMode {
    /// `sum_i p_i |w_i - w_avg|^2`
    #[default]
    Aer,
    /// `max_i |w_i - w_avg|^2`
    Ier,
}

impl HeterogeneityMode {
    pub fn as_str(self) -> &'static str {
        match self {
            HeterogeneityMode::Aer => "aer",
            HeterogeneityMode::Ier => "ier",
        }
    }
}

/// A loss model together with the true local optima.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub loss: LossModel,
    pub true_optima: Vec<ModelVector>,
    pub weights: Vec<f64>,
}

impl ProblemInstance {
    pub fn num_clients(&self) -> usize {
        self.true_optima.len()
    }

    pub fn dim(&self) -> usize {
        self.loss.dim()
    }

    /// Draws one fresh record from client `i`'s distribution.
    pub fn sample_point<R: rand::Rng + ?Sized>(&self, i: usize, rng: &mut R) -> DataPoint {
        generate::sample_point(&self.loss.kind, &self.true_optima[i], rng)
    }

    pub fn average_global_model(&self) -> ModelVector {
        average_global_model(&self.weights, &self.true_optima)
            .expect("instance weights are validated at construction")
    }

    pub fn heterogeneity_r2(&self, mode: HeterogeneityMode) -> f64 {
        heterogeneity_r2(&self.weights, &self.true_optima, mode)
            .expect("instance weights are validated at construction")
    }
}
