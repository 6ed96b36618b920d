use serde::{Deserialize, Serialize};

use super::{AlgorithmConfig, TuningConstants};
use crate::error::{invalid, Result};
use crate::instance::{validate_weights, Constants, FederatedDataset, HeterogeneityMode, LossModel};

/// Upper cap on the selected lambda.
pub const LAMBDA_MAX: f64 = 1e6;

fn ceil_count(x: f64) -> usize {
    // `as` saturates, which is what we want for astronomically large bounds.
    x.ceil().max(0.0) as usize
}

/// `K_t = max(1, ceil(c1 (lambda^2 v 1) t) - 1)`.
pub(crate) fn linear_k(c1: f64, lambda: f64, t: usize) -> usize {
    ceil_count(c1 * (lambda * lambda).max(1.0) * t as f64).saturating_sub(1).max(1)
}

/// Minimum round counts for SoftFedAvg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRequirements {
    pub t_min: usize,
    pub k_final_min: usize,
    pub c1: f64,
    pub lambda: f64,
}

impl RoundRequirements {
    /// Minimum local steps in round `t`.
    pub fn k_t(&self, t: usize) -> usize {
        linear_k(self.c1, self.lambda, t)
    }
}

fn check_sizes(p: &[f64], n: &[usize]) -> Result<()> {
    validate_weights(p)?;
    if p.len() != n.len() || n.contains(&0) {
        return Err(invalid("need one positive sample size per weight"));
    }
    Ok(())
}

/// Lower bounds on `T`, `K_t` and `K_T` for SoftFedAvg with weight `lambda`.
///
/// AER variant:
/// `T >= c2 lambda (lambda v 1) m |p|^2 max(1 / sum p_i/n_i, lambda (lambda v 1) n_max^2)` and
/// `K_T >= c3 (lambda + 1)^2 max(1 / sum p_i/n_i, lambda^2 max_i (p_i n_i)^2)`.
///
/// IER variant:
/// `T >= c2 lambda (lambda v 1) max_i n_i max(1/p_i, lambda (lambda v 1) n_i)` and
/// `K_T >= c3 (lambda + 1)^2 max_i n_i max(1/p_i, lambda^2 p_i^2 n_i)`.
pub fn required_rounds(
    lambda: f64,
    p: &[f64],
    n: &[usize],
    constants: &TuningConstants,
    mode: HeterogeneityMode,
) -> Result<RoundRequirements> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("required_rounds needs lambda > 0, got {lambda}")));
    }
    check_sizes(p, n)?;
    let lv1 = lambda.max(1.0);
    let (t, k) = match mode {
        HeterogeneityMode::Aer => {
            let m = p.len() as f64;
            let p2: f64 = p.iter().map(|x| x * x).sum();
            let s1: f64 = p.iter().zip(n).map(|(pi, &ni)| pi / ni as f64).sum();
            let n_max = *n.iter().max().unwrap() as f64;
            let pn_max = p.iter().zip(n).map(|(pi, &ni)| pi * ni as f64).fold(0.0, f64::max);
            let t = constants.c2 * lambda * lv1 * m * p2 * (1.0 / s1).max(lambda * lv1 * n_max * n_max);
            let k = constants.c3 * (lambda + 1.0).powi(2) * (1.0 / s1).max(lambda * lambda * pn_max * pn_max);
            (t, k)
        }
        HeterogeneityMode::Ier => {
            let t = p
                .iter()
                .zip(n)
                .map(|(pi, &ni)| {
                    let ni = ni as f64;
                    ni * (1.0 / pi).max(lambda * lv1 * ni)
                })
                .fold(0.0, f64::max);
            let k = p
                .iter()
                .zip(n)
                .map(|(pi, &ni)| {
                    let ni = ni as f64;
                    ni * (1.0 / pi).max(lambda * lambda * pi * pi * ni)
                })
                .fold(0.0, f64::max);
            (constants.c2 * lambda * lv1 * t, constants.c3 * (lambda + 1.0).powi(2) * k)
        }
    };
    Ok(RoundRequirements {
        t_min: ceil_count(t).max(1),
        k_final_min: ceil_count(k).max(1),
        c1: constants.c1,
        lambda,
    })
}

/// Local steps in round `t` that make the outer loop converge at rate
/// `1/t`: `K_t + 1 >= (4t + 20) lambda^2 beta^2 D^2 / (mu^2 G^2)` with
/// `G^2 = min(beta^2 D^2, 2 lambda |l|_inf, lambda^2 D^2)`.
pub fn inner_rounds_for_outer_bound(c: &Constants, mu: f64, lambda: f64, t: usize) -> usize {
    let bd2 = (c.beta * c.diameter).powi(2);
    let g2 = bd2.min(2.0 * lambda * c.loss_sup).min((lambda * c.diameter).powi(2));
    let need = (4.0 * t as f64 + 20.0) * lambda * lambda * bd2 / (mu * mu * g2);
    ceil_count(need).saturating_sub(1).max(1)
}

/// Which regime of the lambda rule applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LambdaEvent {
    /// AER: `R >= sqrt(sum p/n)`.
    A,
    /// AER: `sum p^2/n / sqrt(sum p/n) <= R < sqrt(sum p/n)`.
    B,
    /// AER: below both thresholds.
    C,
    /// IER: `R^2 >= m/N`.
    IerLarge,
    /// IER: `R^2 < m/N`.
    IerSmall,
}

/// The heterogeneity-dependent choice of lambda, capped at [`LAMBDA_MAX`].
///
/// AER mode, with `s1 = sum p_i/n_i` and `s2 = sum p_i^2/n_i`:
/// `mu s1 / (16 R^2)` on A, `mu sqrt(s1) / (16 c_p R)` on B,
/// `mu s1 / (16 c_p s2)` on C.
///
/// IER mode: `c_a m / (D^2 N)` when `R^2 >= m/N`, otherwise
/// `c_b sqrt(m / (R^2 N + 1))`.
#[allow(clippy::too_many_arguments)]
pub fn select_lambda(
    r2: f64,
    p: &[f64],
    n: &[usize],
    mu: f64,
    constants: &TuningConstants,
    mode: HeterogeneityMode,
    diameter: f64,
) -> Result<(f64, LambdaEvent)> {
    if !(r2 >= 0.0 && r2.is_finite()) {
        return Err(invalid(format!("R^2 must be finite and nonnegative, got {r2}")));
    }
    check_sizes(p, n)?;
    let r = r2.sqrt();
    let (lambda, event) = match mode {
        HeterogeneityMode::Aer => {
            let s1: f64 = p.iter().zip(n).map(|(pi, &ni)| pi / ni as f64).sum();
            let s2: f64 = p.iter().zip(n).map(|(pi, &ni)| pi * pi / ni as f64).sum();
            if r >= s1.sqrt() {
                (mu * s1 / (16.0 * r2), LambdaEvent::A)
            } else if r >= s2 / s1.sqrt() && r > 0.0 {
                (mu * s1.sqrt() / (16.0 * constants.c_p * r), LambdaEvent::B)
            } else {
                (mu * s1 / (16.0 * constants.c_p * s2), LambdaEvent::C)
            }
        }
        HeterogeneityMode::Ier => {
            let m = p.len() as f64;
            let total = n.iter().sum::<usize>() as f64;
            if r2 >= m / total {
                (constants.c_a * m / (diameter * diameter * total), LambdaEvent::IerLarge)
            } else {
                (constants.c_b * (m / (r2 * total + 1.0)).sqrt(), LambdaEvent::IerSmall)
            }
        }
    };
    Ok((lambda.min(LAMBDA_MAX), event))
}

/// Lists every way the configured rounds fall short of [`required_rounds`].
pub fn check_rounds(
    config: &AlgorithmConfig,
    model: &LossModel,
    data: &FederatedDataset,
) -> Result<Vec<String>> {
    let req = required_rounds(config.lambda, data.weights(), &data.sizes(), &config.constants, config.mode)?;
    let mut issues = Vec::new();
    if config.rounds < req.t_min {
        issues.push(format!("T = {} is below the required {}", config.rounds, req.t_min));
    }
    if config.final_steps < req.k_final_min {
        issues.push(format!("K_T = {} is below the required {}", config.final_steps, req.k_final_min));
    }
    let mu = config.mu(model);
    if let Some(t) =
        (0..config.rounds).rev().find(|&t| config.local_steps.steps(t, config.lambda, model, mu) < req.k_t(t))
    {
        issues.push(format!(
            "K_t = {} at t = {t} is below the required {}",
            config.local_steps.steps(t, config.lambda, model, mu),
            req.k_t(t)
        ));
    }
    Ok(issues)
}
