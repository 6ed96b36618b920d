use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    ClientDataset, DataPoint, FeatureDist, FederatedDataset, HeterogeneityMode, Label, LossKind, LossModel,
    ModelVector, ProblemInstance,
};
use crate::error::{invalid, Error, Result};
use crate::linalg::{dist2, dot, norm};
use crate::optim::ProjectionDomain;
use crate::rng::{stream, Purpose};

use super::loss::sigmoid;

const PLANTING_ATTEMPTS: usize = 64;

/// Loss family and its data parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    Logistic {
        c_x: f64,
        #[serde(default)]
        features: FeatureDist,
    },
    Quadratic {
        rho: f64,
    },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Logistic { .. } => "logistic",
            Family::Quadratic { .. } => "quadratic",
        }
    }
}

/// How the projection domain is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DomainChoice {
    /// A ball around the planting center that contains every optimum with
    /// `margin` to spare (default `2R`), and has radius at least `min_radius`.
    Fitted {
        #[serde(default)]
        margin: Option<f64>,
        #[serde(default = "default_min_radius")]
        min_radius: f64,
    },
    /// A fixed ball. Planting fails if an optimum would fall outside.
    Fixed { center: Vec<f64>, radius: f64 },
}

fn default_min_radius() -> f64 {
    1.0
}

impl Default for DomainChoice {
    fn default() -> Self {
        DomainChoice::Fitted { margin: None, min_radius: default_min_radius() }
    }
}

/// Everything needed to generate an instance and its data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    #[serde(flatten)]
    pub family: Family,
    /// Per-client sample sizes; `m` is the length.
    pub n: Vec<usize>,
    pub d: usize,
    pub target_r2: f64,
    #[serde(default)]
    pub mode: HeterogeneityMode,
    #[serde(default)]
    pub domain: DomainChoice,
    /// Where the average global model is placed. Defaults to the fixed
    /// domain's center, or the origin.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
}

impl InstanceSpec {
    pub fn balanced(family: Family, m: usize, n: usize, d: usize, target_r2: f64) -> Self {
        InstanceSpec {
            family,
            n: vec![n; m],
            d,
            target_r2,
            mode: HeterogeneityMode::Aer,
            domain: DomainChoice::default(),
            center: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n.is_empty() {
            return Err(invalid("at least one client is required"));
        }
        if self.d == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if self.n.contains(&0) {
            return Err(invalid("every client needs at least one record"));
        }
        if !(self.target_r2.is_finite() && self.target_r2 >= 0.0) {
            return Err(invalid(format!("target R^2 must be nonnegative, got {}", self.target_r2)));
        }
        match self.family {
            Family::Logistic { c_x, .. } if !(c_x.is_finite() && c_x > 0.0) => {
                Err(invalid("c_x must be positive"))
            }
            Family::Quadratic { rho } if !(rho.is_finite() && rho >= 0.0) => {
                Err(invalid("rho must be nonnegative"))
            }
            _ => Ok(()),
        }
    }
}

fn unit_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let r = norm(&v);
        if r > 1e-12 {
            return v.into_iter().map(|x| x / r).collect();
        }
    }
}

/// Places optima around `center` with weighted average exactly `center` and
/// heterogeneity exactly `target` (up to rounding).
fn plant_optima<R: Rng + ?Sized>(
    center: &[f64],
    p: &[f64],
    target: f64,
    mode: HeterogeneityMode,
    rng: &mut R,
) -> Result<Vec<ModelVector>> {
    let m = p.len();
    let d = center.len();
    if target == 0.0 {
        return Ok(vec![ModelVector::from(center); m]);
    }
    if m == 1 {
        return Err(Error::InfeasibleHeterogeneity(
            "a single client cannot have positive heterogeneity".into(),
        ));
    }
    for _ in 0..PLANTING_ATTEMPTS {
        let u: Vec<Vec<f64>> = (0..m).map(|_| unit_vector(d, rng)).collect();
        let mut mean = vec![0.0; d];
        for (ui, pi) in u.iter().zip(p) {
            crate::linalg::axpy(*pi, ui, &mut mean);
        }
        let v: Vec<Vec<f64>> =
            u.iter().map(|ui| ui.iter().zip(&mean).map(|(a, b)| a - b).collect()).collect();
        let spread = match mode {
            HeterogeneityMode::Aer => v.iter().zip(p).map(|(vi, pi)| pi * dot(vi, vi)).sum(),
            HeterogeneityMode::Ier => v.iter().map(|vi| dot(vi, vi)).fold(0.0, f64::max),
        };
        if spread <= 1e-8 {
            continue;
        }
        let s = (target / spread).sqrt();
        return Ok(v
            .into_iter()
            .map(|vi| ModelVector(vi.iter().zip(center).map(|(a, c)| c + s * a).collect()))
            .collect());
    }
    Err(Error::InfeasibleHeterogeneity("could not find a non-degenerate placement of the optima".into()))
}

fn loss_model(family: Family, domain: ProjectionDomain) -> Result<LossModel> {
    match family {
        Family::Logistic { c_x, features } => LossModel::logistic(c_x, features, domain),
        Family::Quadratic { rho } => LossModel::quadratic(rho, domain),
    }
}

/// Draws one record for a client whose optimum is `w_star`.
pub(crate) fn sample_point<R: Rng + ?Sized>(kind: &LossKind, w_star: &[f64], rng: &mut R) -> DataPoint {
    match *kind {
        LossKind::Logistic { c_x, features } => {
            let x: Vec<f64> = (0..w_star.len())
                .map(|_| match features {
                    FeatureDist::Uniform => rng.random_range(-c_x..=c_x),
                    FeatureDist::Rademacher => {
                        if rng.random::<bool>() {
                            c_x
                        } else {
                            -c_x
                        }
                    }
                })
                .collect();
            let pos = rng.random::<f64>() < sigmoid(dot(&x, w_star));
            DataPoint::Labeled { x, y: if pos { Label::Pos } else { Label::Neg } }
        }
        LossKind::Quadratic { rho } => {
            let u = unit_vector(w_star.len(), rng);
            DataPoint::Plain { z: w_star.iter().zip(&u).map(|(t, ui)| t + rho * ui).collect() }
        }
    }
}

/// Samples `n[i]` records for each client of `instance`.
///
/// Client `i` draws from its own stream, so changing one client's sample
/// size leaves the other clients' data untouched.
pub fn sample_dataset(instance: &ProblemInstance, n: &[usize], seed: u64) -> Result<FederatedDataset> {
    if n.len() != instance.num_clients() {
        return Err(invalid("need one sample size per client"));
    }
    let clients = n
        .iter()
        .enumerate()
        .map(|(i, &ni)| {
            let mut rng = stream(seed, Purpose::DataGeneration, i as u64, 0);
            let pts = (0..ni).map(|_| instance.sample_point(i, &mut rng)).collect();
            ClientDataset::new(i, pts)
        })
        .collect::<Result<Vec<_>>>()?;
    FederatedDataset::with_weights(clients, instance.weights.clone())
}

fn size_weights(n: &[usize]) -> Vec<f64> {
    let total: usize = n.iter().sum();
    n.iter().map(|&ni| ni as f64 / total as f64).collect()
}

/// Plants optima at the requested heterogeneity and samples client data.
pub fn generate_instance(spec: &InstanceSpec, seed: u64) -> Result<(ProblemInstance, FederatedDataset)> {
    spec.validate()?;
    let p = size_weights(&spec.n);
    let center = match (&spec.center, &spec.domain) {
        (Some(c), _) => c.clone(),
        (None, DomainChoice::Fixed { center, .. }) => center.clone(),
        (None, DomainChoice::Fitted { .. }) => vec![0.0; spec.d],
    };
    if center.len() != spec.d {
        return Err(invalid("planting center has the wrong dimension"));
    }
    let mut rng = stream(seed, Purpose::Planting, 0, 0);
    let optima = plant_optima(&center, &p, spec.target_r2, spec.mode, &mut rng)?;
    let domain = match &spec.domain {
        DomainChoice::Fitted { margin, min_radius } => {
            let margin = margin.unwrap_or(2.0 * spec.target_r2.sqrt());
            let reach = optima.iter().map(|w| dist2(w, &center).sqrt()).fold(0.0, f64::max);
            ProjectionDomain::new(center.clone(), (reach + margin).max(*min_radius))?
        }
        DomainChoice::Fixed { center, radius } => {
            let dom = ProjectionDomain::new(center.clone(), *radius)?;
            if optima.iter().any(|w| !dom.contains(w, 1e-12)) {
                return Err(Error::InfeasibleHeterogeneity(format!(
                    "target R^2 = {} places optima outside the domain of radius {radius}",
                    spec.target_r2
                )));
            }
            dom
        }
    };
    let instance =
        ProblemInstance { loss: loss_model(spec.family, domain)?, true_optima: optima, weights: p };
    let data = sample_dataset(&instance, &spec.n, seed)?;
    Ok((instance, data))
}

/// Logistic instance with uniform features and a fitted domain.
pub fn generate_logistic_instance(
    m: usize,
    n: &[usize],
    d: usize,
    c_x: f64,
    target_r2: f64,
    mode: HeterogeneityMode,
    seed: u64,
) -> Result<(ProblemInstance, FederatedDataset)> {
    if m != n.len() {
        return Err(invalid("m must equal the number of sample sizes"));
    }
    let mut spec =
        InstanceSpec::balanced(Family::Logistic { c_x, features: FeatureDist::Uniform }, m, 1, d, target_r2);
    spec.n = n.to_vec();
    spec.mode = mode;
    generate_instance(&spec, seed)
}

/// Quadratic instance (observations uniform on spheres) with a fitted domain.
pub fn generate_quadratic_instance(
    m: usize,
    n: &[usize],
    d: usize,
    target_r2: f64,
    rho: f64,
    mode: HeterogeneityMode,
    seed: u64,
) -> Result<(ProblemInstance, FederatedDataset)> {
    if m != n.len() {
        return Err(invalid("m must equal the number of sample sizes"));
    }
    let mut spec = InstanceSpec::balanced(Family::Quadratic { rho }, m, 1, d, target_r2);
    spec.n = n.to_vec();
    spec.mode = mode;
    generate_instance(&spec, seed)
}

/// Hard instance with optima `delta_i * v_i` around the domain center,
/// `v_i` uniform sign vectors. Data can be drawn with [`sample_dataset`].
pub fn generate_assouad_instance(
    n: &[usize],
    delta: &[f64],
    base: &LossModel,
    seed: u64,
) -> Result<ProblemInstance> {
    if n.is_empty() || n.len() != delta.len() {
        return Err(invalid("need one delta per client"));
    }
    if n.contains(&0) {
        return Err(invalid("every client needs at least one record"));
    }
    let d = base.dim();
    let radius = base.domain.radius();
    let mut rng = stream(seed, Purpose::Planting, 0, 0);
    let mut optima = Vec::with_capacity(n.len());
    for &di in delta {
        if !(di.is_finite() && di >= 0.0) {
            return Err(invalid("delta must be nonnegative"));
        }
        if di * (d as f64).sqrt() > radius {
            return Err(Error::InfeasibleHeterogeneity(format!(
                "delta {di} in dimension {d} exceeds the domain radius {radius}"
            )));
        }
        let c = base.domain.center();
        let w: Vec<f64> = (0..d).map(|j| c[j] + if rng.random::<bool>() { di } else { -di }).collect();
        optima.push(ModelVector(w));
    }
    Ok(ProblemInstance { loss: base.clone(), true_optima: optima, weights: size_weights(n) })
}
