use rand::Rng;

use super::{MinibatchSampler, ProjectionDomain, StepSchedule};
use crate::error::{check_dim, invalid, Result};
use crate::instance::{ClientDataset, LossModel, ModelVector};

/// Proximal anchor `(lambda/2) |w - g|^2` added to the local objective.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Anchor<'a> {
    pub g: &'a [f64],
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct SgdRun {
    pub steps: usize,
    /// The iterate stopped moving before the step budget ran out.
    pub fixed_point: bool,
}

/// Runs `steps` projected minibatch SGD steps on `w` in place, with step
/// sizes `schedule.value(t, k_offset + k)`.
///
/// With a full batch the update is deterministic, so once an unprojected
/// step leaves `w` bit-identical every later step does too: step sizes are
/// nonincreasing and floating-point rounding is monotone. The loop stops
/// there. This is skipped when an observer is attached so that it sees
/// every step.
/// Called with the step index and the iterate after each step.
pub(crate) type Observer<'a> = &'a mut dyn FnMut(usize, &[f64]);

#[allow(clippy::too_many_arguments)]
pub(crate) fn run_projected_sgd<R: Rng + ?Sized>(
    model: &LossModel,
    data: &ClientDataset,
    domain: &ProjectionDomain,
    anchor: Option<Anchor<'_>>,
    schedule: &StepSchedule,
    t: usize,
    k_offset: usize,
    steps: usize,
    sampler: &mut MinibatchSampler,
    rng: &mut R,
    w: &mut [f64],
    mut observer: Option<Observer<'_>>,
) -> SgdRun {
    let dim = w.len();
    let mut grad = vec![0.0; dim];
    let mut next = vec![0.0; dim];
    let can_stop = sampler.is_full() && observer.is_none();
    for k in 0..steps {
        let eta = schedule.value(t, k_offset + k);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let batch = sampler.sample(rng);
        let inv_b = 1.0 / batch.len() as f64;
        for &j in batch {
            model.add_grad_unchecked(w, &data.points[j], inv_b, &mut grad);
        }
        if let Some(a) = anchor {
            for ((gr, wi), gi) in grad.iter_mut().zip(w.iter()).zip(a.g) {
                *gr += a.lambda * (wi - gi);
            }
        }
        for ((n, wi), gr) in next.iter_mut().zip(w.iter()).zip(&grad) {
            *n = wi - eta * gr;
        }
        if can_stop && next == *w {
            return SgdRun { steps: k, fixed_point: true };
        }
        domain.project_in_place(&mut next);
        w.copy_from_slice(&next);
        if let Some(obs) = observer.as_mut() {
            obs(k, w);
        }
    }
    SgdRun { steps, fixed_point: false }
}

fn validate_common(
    model: &LossModel,
    s: &ClientDataset,
    domain: &ProjectionDomain,
    w0: &[f64],
    steps: usize,
) -> Result<()> {
    model.check_dataset(s)?;
    check_dim(model.dim(), domain.dim())?;
    check_dim(model.dim(), w0.len())?;
    if steps == 0 {
        return Err(invalid("at least one SGD step is required"));
    }
    Ok(())
}

/// Projected minibatch SGD on the client's empirical risk. Returns the last
/// iterate.
#[allow(clippy::too_many_arguments)]
pub fn sgd_erm<R: Rng + ?Sized>(
    model: &LossModel,
    s: &ClientDataset,
    domain: &ProjectionDomain,
    schedule: &StepSchedule,
    steps: usize,
    batch: usize,
    rng: &mut R,
    w0: &[f64],
) -> Result<ModelVector> {
    validate_common(model, s, domain, w0, steps)?;
    schedule.validate()?;
    let mut sampler = MinibatchSampler::new(s.len(), batch)?;
    let mut w = domain.project(w0)?;
    run_projected_sgd(model, s, domain, None, schedule, 0, 0, steps, &mut sampler, rng, &mut w, None);
    Ok(w)
}

#[allow(clippy::too_many_arguments)]
pub(super) fn prox_sgd<R: Rng + ?Sized>(
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
    validate_common(model, s, domain, w0, steps)?;
    check_dim(model.dim(), g.len())?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("prox_local needs lambda > 0, got {lambda}")));
    }
    let schedule = StepSchedule::InnerProx { mu: model.constants.mu, lambda };
    let mut sampler = MinibatchSampler::new(s.len(), batch)?;
    let mut w = domain.project(w0)?;
    let anchor = Some(Anchor { g, lambda });
    run_projected_sgd(model, s, domain, anchor, &schedule, 0, 0, steps, &mut sampler, rng, &mut w, None);
    Ok(w)
}
