use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};
use crate::instance::ModelVector;
use crate::linalg::{dist2, norm};

/// A closed Euclidean ball, the feasible set for every model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionDomain {
    center: ModelVector,
    radius: f64,
}

impl ProjectionDomain {
    pub fn new(center: impl Into<ModelVector>, radius: f64) -> Result<Self> {
        let center = center.into();
        if !(radius.is_finite() && radius > 0.0) {
            return Err(invalid(format!("domain radius must be finite and positive, got {radius}")));
        }
        if center.is_empty() {
            return Err(invalid("domain center must have dimension at least 1"));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(invalid("domain center has non-finite coordinates"));
        }
        Ok(ProjectionDomain { center, radius })
    }

    /// Ball of the given radius around the origin.
    pub fn centered(dim: usize, radius: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], radius)
    }

    pub fn center(&self) -> &ModelVector {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// D, twice the radius.
    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Euclidean projection onto the ball.
    pub fn project(&self, w: &[f64]) -> Result<ModelVector> {
        check_dim(self.dim(), w.len())?;
        let mut out = w.to_vec();
        self.project_in_place(&mut out);
        Ok(ModelVector::from(out))
    }

    /// Projects `w` in place. The caller guarantees matching dimensions.
    pub fn project_in_place(&self, w: &mut [f64]) {
        debug_assert_eq!(w.len(), self.dim());
        let r2 = dist2(w, &self.center);
        if r2 <= self.radius * self.radius {
            return;
        }
        let scale = self.radius / r2.sqrt();
        for (wi, ci) in w.iter_mut().zip(self.center.iter()) {
            *wi = ci + (*wi - ci) * scale;
        }
    }

    /// Membership test with an absolute slack on the radius.
    pub fn contains(&self, w: &[f64], tol: f64) -> bool {
        w.len() == self.dim() && norm_from(&self.center, w) <= self.radius + tol
    }
}

fn norm_from(c: &[f64], w: &[f64]) -> f64 {
    let diff: Vec<f64> = w.iter().zip(c).map(|(a, b)| a - b).collect();
    norm(&diff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn radial_scaling() {
        let dom = ProjectionDomain::centered(2, 1.0).unwrap();
        let p = dom.project(&[3.0, 4.0]).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        assert_eq!(&*dom.project(&[0.1, -0.2]).unwrap(), &[0.1, -0.2]);
    }

    #[test]
    fn rejects_bad_radius() {
        assert!(ProjectionDomain::centered(2, 0.0).is_err());
        assert!(ProjectionDomain::centered(2, f64::NAN).is_err());
        assert!(ProjectionDomain::centered(0, 1.0).is_err());
    }

    fn vec3() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0..10.0f64, 3)
    }

    proptest! {
        #[test]
        fn idempotent_nonexpansive_inside(
            c in vec3(), r in 0.1..5.0f64, w in vec3(), v in vec3()
        ) {
            let dom = ProjectionDomain::new(c, r).unwrap();
            let pw = dom.project(&w).unwrap();
            let pv = dom.project(&v).unwrap();
            prop_assert!(dom.contains(&pw, 1e-12));
            let ppw = dom.project(&pw).unwrap();
            prop_assert!(dist2(&ppw, &pw) <= 1e-24);
            prop_assert!(dist2(&pw, &pv).sqrt() <= dist2(&w, &v).sqrt() + 1e-12);
        }
    }
}
