use nalgebra::{DMatrix, SymmetricEigen};

use super::{
    validate_weights, ClientDataset, DataPoint, HeterogeneityMode, LossKind, LossModel, ModelVector,
};
use crate::error::{check_dim, invalid, Result};
use crate::linalg::{dist2, dot, weighted_sum};

/// `log(1 + exp(t))` without overflow.
#[inline]
pub(crate) fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn check_point(model: &LossModel, w: &[f64], z: &DataPoint) -> Result<()> {
    check_dim(model.dim(), w.len())?;
    check_dim(model.dim(), z.dim())?;
    match (&model.kind, z) {
        (LossKind::Logistic { .. }, DataPoint::Labeled { .. })
        | (LossKind::Quadratic { .. }, DataPoint::Plain { .. }) => Ok(()),
        _ => Err(invalid("data point variant does not match the loss model")),
    }
}

impl LossModel {
    /// Loss without validation; callers have checked dimensions and variants.
    #[inline]
    pub(crate) fn loss_unchecked(&self, w: &[f64], z: &DataPoint) -> f64 {
        match z {
            DataPoint::Labeled { x, y } => softplus(-y.sign() * dot(x, w)),
            DataPoint::Plain { z } => 0.5 * dist2(w, z),
        }
    }

    /// Adds `scale * grad l(w, z)` into `out`.
    #[inline]
    pub(crate) fn add_grad_unchecked(&self, w: &[f64], z: &DataPoint, scale: f64, out: &mut [f64]) {
        match z {
            DataPoint::Labeled { x, y } => {
                let s = y.sign();
                let c = -s * sigmoid(-s * dot(x, w)) * scale;
                for (o, xi) in out.iter_mut().zip(x) {
                    *o += c * xi;
                }
            }
            DataPoint::Plain { z } => {
                for ((o, wi), zi) in out.iter_mut().zip(w).zip(z) {
                    *o += scale * (wi - zi);
                }
            }
        }
    }

    pub(crate) fn check_dataset(&self, s: &ClientDataset) -> Result<()> {
        if s.is_empty() {
            return Err(invalid(format!("client {} has no data", s.client_id)));
        }
        check_point(self, &vec![0.0; self.dim()], &s.points[0])
    }
}

/// `l(w, z)`.
pub fn loss_value(model: &LossModel, w: &[f64], z: &DataPoint) -> Result<f64> {
    check_point(model, w, z)?;
    Ok(model.loss_unchecked(w, z))
}

/// Gradient of [`loss_value`] in `w`.
pub fn loss_grad(model: &LossModel, w: &[f64], z: &DataPoint) -> Result<ModelVector> {
    check_point(model, w, z)?;
    let mut g = vec![0.0; w.len()];
    model.add_grad_unchecked(w, z, 1.0, &mut g);
    Ok(ModelVector(g))
}

/// Empirical risk `L_i(w, S_i)`, the mean loss over the client's records.
pub fn local_erm(model: &LossModel, w: &[f64], s: &ClientDataset) -> Result<f64> {
    model.check_dataset(s)?;
    check_dim(model.dim(), w.len())?;
    let total: f64 = s.points.iter().map(|z| model.loss_unchecked(w, z)).sum();
    Ok(total / s.len() as f64)
}

/// `sum_i p_i w_i`.
pub fn average_global_model(p: &[f64], optima: &[ModelVector]) -> Result<ModelVector> {
    validate_weights(p)?;
    if p.len() != optima.len() || optima.is_empty() {
        return Err(invalid("need one weight per optimum"));
    }
    let dim = optima[0].len();
    for w in optima {
        check_dim(dim, w.len())?;
    }
    Ok(ModelVector(weighted_sum(dim, p.iter().copied().zip(optima.iter().map(|w| &w[..])))))
}

/// Heterogeneity of the optima around their weighted average.
pub fn heterogeneity_r2(p: &[f64], optima: &[ModelVector], mode: HeterogeneityMode) -> Result<f64> {
    let avg = average_global_model(p, optima)?;
    let d2 = optima.iter().map(|w| dist2(w, &avg));
    Ok(match mode {
        HeterogeneityMode::Aer => d2.zip(p).map(|(d, pi)| pi * d).sum(),
        HeterogeneityMode::Ier => d2.fold(0.0, f64::max),
    })
}

/// Constants of the logistic family on a domain of diameter `diameter`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticConstants {
    /// Curvature floor of the link over the domain.
    pub mu0: f64,
    pub beta: f64,
    pub sigma2: f64,
    pub loss_sup: f64,
}

pub fn logistic_constants(c_x: f64, d: usize, diameter: f64) -> Result<LogisticConstants> {
    if !(c_x > 0.0 && c_x.is_finite()) || d == 0 || !(diameter > 0.0 && diameter.is_finite()) {
        return Err(invalid("logistic constants need positive c_x, d and diameter"));
    }
    let a = c_x * diameter * (d as f64).sqrt();
    let beta = c_x * c_x * d as f64 / 4.0;
    let denom = (a / 2.0).exp() + (-a).exp();
    Ok(LogisticConstants { mu0: 1.0 / (denom * denom), beta, sigma2: beta, loss_sup: a })
}

fn min_eig(m: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Smallest eigenvalue of `(1/n) sum_j x_j x_j^T` over a labeled dataset.
pub fn feature_second_moment_min_eig(s: &ClientDataset) -> Result<f64> {
    let d = s.dim();
    let mut m = DMatrix::<f64>::zeros(d, d);
    for p in &s.points {
        let DataPoint::Labeled { x, .. } = p else {
            return Err(invalid("feature moments need labeled data"));
        };
        let v = nalgebra::DVector::from_column_slice(x);
        m += &v * v.transpose();
    }
    Ok(min_eig(m / s.len() as f64))
}

/// Smallest eigenvalue of the empirical risk Hessian at `w`.
pub fn empirical_hessian_min_eig(model: &LossModel, w: &[f64], s: &ClientDataset) -> Result<f64> {
    model.check_dataset(s)?;
    check_dim(model.dim(), w.len())?;
    let d = s.dim();
    let mut h = DMatrix::<f64>::zeros(d, d);
    for p in &s.points {
        match p {
            DataPoint::Labeled { x, y } => {
                let sg = sigmoid(y.sign() * dot(x, w));
                let v = nalgebra::DVector::from_column_slice(x);
                h += (&v * v.transpose()) * (sg * (1.0 - sg));
            }
            DataPoint::Plain { .. } => h += DMatrix::<f64>::identity(d, d),
        }
    }
    Ok(min_eig(h / s.len() as f64))
}
