use rand::Rng;

use super::ProjectionDomain;
use crate::error::{check_dim, invalid, Result};
use crate::instance::{ClientDataset, Constants, LossModel, ModelVector};

/// Approximates `prox(g) = argmin_w L(w, S) + (lambda/2)|g - w|^2` with
/// `steps` projected SGD steps under the `InnerProx` schedule, starting
/// from `w0`.
#[allow(clippy::too_many_arguments)]
pub fn prox_local<R: Rng + ?Sized>(
    model: &LossModel,
    s: &ClientDataset,
    domain: &ProjectionDomain,
    g: &[f64],
    lambda: f64,
    steps: usize,
    batch: usize,
    rng: &mut R,
    w0: &[f64],
) -> Result<ModelVector> {
    super::sgd::prox_sgd(model, s, domain, g, lambda, steps, batch, rng, w0)
}

/// Exact prox for the quadratic loss: the projection of
/// `(zbar + lambda g) / (1 + lambda)`. With `lambda = 0` this is the
/// (projected) sample mean.
pub fn prox_quadratic_closed_form(
    s: &ClientDataset,
    g: &[f64],
    lambda: f64,
    domain: &ProjectionDomain,
) -> Result<ModelVector> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    check_dim(domain.dim(), g.len())?;
    let zbar = s.plain_mean()?;
    check_dim(domain.dim(), zbar.len())?;
    let w: Vec<f64> = if lambda == 0.0 {
        zbar.into_inner()
    } else {
        zbar.iter().zip(g).map(|(z, gi)| (z + lambda * gi) / (1.0 + lambda)).collect()
    };
    domain.project(&w)
}

/// Gradient of the Moreau envelope at `g`, given the prox value:
/// `lambda (g - prox)`.
pub fn moreau_grad(g: &[f64], lambda: f64, prox_value: &[f64]) -> Result<ModelVector> {
    check_dim(g.len(), prox_value.len())?;
    Ok(ModelVector(g.iter().zip(prox_value).map(|(a, b)| lambda * (a - b)).collect()))
}

/// A priori bound on the Moreau gradient norm:
/// `min(beta D, sqrt(2 lambda |l|_inf), lambda D)`.
pub fn gradient_norm_bound(c: &Constants, lambda: f64) -> f64 {
    (c.beta * c.diameter).min((2.0 * lambda * c.loss_sup).sqrt()).min(lambda * c.diameter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::DataPoint;

    fn data(vals: &[f64]) -> ClientDataset {
        ClientDataset::new(0, vals.iter().map(|v| DataPoint::Plain { z: vec![*v] }).collect()).unwrap()
    }

    #[test]
    fn closed_form_cases() {
        let dom = ProjectionDomain::centered(1, 10.0).unwrap();
        let s = data(&[1.0, 3.0]);
        assert_eq!(prox_quadratic_closed_form(&s, &[0.0], 1.0, &dom).unwrap()[0], 1.0);
        assert_eq!(prox_quadratic_closed_form(&s, &[2.0], 7.0, &dom).unwrap()[0], 2.0);
        assert_eq!(prox_quadratic_closed_form(&s, &[-5.0], 0.0, &dom).unwrap()[0], 2.0);
        let small = ProjectionDomain::centered(1, 0.5).unwrap();
        assert_eq!(prox_quadratic_closed_form(&s, &[0.0], 1.0, &small).unwrap()[0], 0.5);
        assert!(prox_quadratic_closed_form(&s, &[0.0], -1.0, &dom).is_err());
    }

    #[test]
    fn moreau_gradient_of_closed_form() {
        let dom = ProjectionDomain::centered(1, 10.0).unwrap();
        let s = data(&[1.0, 3.0]);
        let (g, lambda) = (5.0, 2.0);
        let p = prox_quadratic_closed_form(&s, &[g], lambda, &dom).unwrap();
        let mg = moreau_grad(&[g], lambda, &p).unwrap();
        assert!((mg[0] - lambda * (g - 2.0) / (1.0 + lambda)).abs() < 1e-14);
        assert_eq!(moreau_grad(&[g], lambda, &[g]).unwrap()[0], 0.0);
    }

    #[test]
    fn prox_local_requires_positive_lambda() {
        let model = LossModel::quadratic(0.0, ProjectionDomain::centered(1, 3.0).unwrap()).unwrap();
        let s = data(&[1.0]);
        let mut rng = crate::rng::stream(0, crate::rng::Purpose::LocalSgd, 0, 0);
        assert!(prox_local(&model, &s, &model.domain, &[0.0], 0.0, 5, 1, &mut rng, &[0.0]).is_err());
        assert!(prox_local(&model, &s, &model.domain, &[0.0], 1.0, 0, 1, &mut rng, &[0.0]).is_err());
    }
}
