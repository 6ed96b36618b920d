use crate::instance::Constants;
use crate::optim::gradient_norm_bound;

/// `8 beta^2 D^2 / (mu^2 (k + 1))`: expected squared distance of the k-th
/// inner iterate to the prox.
pub fn inner_loop_bound(c: &Constants, mu: f64, k: usize) -> f64 {
    8.0 * (c.beta * c.diameter).powi(2) / (mu * mu * (k as f64 + 1.0))
}

/// `12 (lambda + mu)^2 m |p|^2 G^2 / (lambda^2 mu^2 (t + 1))` with `G` the
/// a priori Moreau gradient bound.
pub fn outer_loop_bound(c: &Constants, mu: f64, lambda: f64, p: &[f64], t: usize) -> f64 {
    let g2 = gradient_norm_bound(c, lambda).powi(2);
    let mp2 = p.len() as f64 * p.iter().map(|x| x * x).sum::<f64>();
    12.0 * (lambda + mu).powi(2) * mp2 * g2 / (lambda * lambda * mu * mu * (t as f64 + 1.0))
}

/// Bound on the expected objective gap after `rounds` Stage I rounds and
/// `final_steps` Stage II steps:
/// `4 (beta + lambda) beta^2 D^2 / (mu^2 (K_T + 1)) + 6 (lambda + mu)^2 m |p|^2 G^2 / (lambda mu^2 (T + 1))`.
pub fn optimization_error_bound(
    c: &Constants,
    mu: f64,
    lambda: f64,
    p: &[f64],
    rounds: usize,
    final_steps: usize,
) -> f64 {
    let g2 = gradient_norm_bound(c, lambda).powi(2);
    let mp2 = p.len() as f64 * p.iter().map(|x| x * x).sum::<f64>();
    4.0 * (c.beta + lambda) * (c.beta * c.diameter).powi(2) / (mu * mu * (final_steps as f64 + 1.0))
        + 6.0 * (lambda + mu).powi(2) * mp2 * g2 / (lambda * mu * mu * (rounds as f64 + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_arithmetic() {
        let c = Constants { mu: 1.0, beta: 1.0, loss_sup: 8.0, sigma2: 1.0, diameter: 2.0 };
        assert_eq!(inner_loop_bound(&c, 1.0, 3), 8.0);
        // G^2 = min(4, 16, 4) = 4 at lambda = 1.
        assert_eq!(outer_loop_bound(&c, 1.0, 1.0, &[0.5, 0.5], 0), 12.0 * 4.0 * 1.0 * 4.0);
        assert_eq!(optimization_error_bound(&c, 1.0, 1.0, &[1.0], 0, 0), 32.0 + 96.0);
    }
}
