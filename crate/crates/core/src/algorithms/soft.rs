use std::time::Instant;

use super::baselines::{client_states, sample_clients};
use super::{
    required_rounds, validate_inputs, AlgorithmConfig, RoundRecord, Solver, StepRule, TrainingOutput,
};
use crate::error::{check_dim, invalid, Error, Result};
use crate::instance::{FederatedDataset, LossModel, ModelVector};
use crate::linalg::{dist2, weighted_sum};
use crate::optim::{run_projected_sgd, Anchor, MinibatchSampler, ProjectionDomain, StepSchedule};
use crate::rng::{stream, Purpose};

/// Exact minimizer of `sum_i p_i [L_i(w_i) + (lambda/2)|w_glob - w_i|^2]`
/// for the quadratic family: `w_glob = sum p_i zbar_i` and
/// `w_i = (zbar_i + lambda w_glob) / (1 + lambda)`.
///
/// The unconstrained solution is projected onto `domain`, which is exact
/// whenever it lies inside.
pub fn soft_sharing_oracle_quadratic(
    data: &FederatedDataset,
    lambda: f64,
    p: &[f64],
    domain: &ProjectionDomain,
) -> Result<(ModelVector, Vec<ModelVector>)> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    if p.len() != data.num_clients() {
        return Err(invalid("need one weight per client"));
    }
    crate::instance::validate_weights(p)?;
    check_dim(domain.dim(), data.dim())?;
    let means = data.clients().iter().map(|c| c.plain_mean()).collect::<Result<Vec<_>>>()?;
    let g = weighted_sum(data.dim(), p.iter().copied().zip(means.iter().map(|v| &v[..])));
    let locals = means
        .iter()
        .map(|z| {
            let w: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| (zi + lambda * gi) / (1.0 + lambda)).collect();
            domain.project(&w)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((domain.project(&g)?, locals))
}

/// Reference point for trace distances.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceOracle {
    pub global: ModelVector,
    pub locals: Vec<ModelVector>,
}

/// Two-stage SoftFedAvg.
///
/// Stage I runs `T` rounds. In round `t` each sampled client runs `K_t`
/// projected SGD steps on `L_i(w) + (lambda/2)|w - w_glob_t|^2` from its own
/// previous model, and the server sets
/// `w_glob <- w_glob - (lambda m eta_t / B_glob) sum_{i in C_t} p_i (w_glob - w_i)`,
/// projected. Unsampled clients keep their models. Stage II runs `K_T` steps
/// on every client against `w_glob_T`.
///
/// The output carries the Stage II local models and `w_glob_T`.
pub fn soft_fed_avg(
    model: &LossModel,
    data: &FederatedDataset,
    config: &AlgorithmConfig,
    seed: u64,
) -> Result<TrainingOutput> {
    run(model, data, config, seed, None)
}

/// [`soft_fed_avg`] with a per-round trace of distances to `oracle`.
pub fn soft_fed_avg_traced(
    model: &LossModel,
    data: &FederatedDataset,
    config: &AlgorithmConfig,
    seed: u64,
    oracle: &TraceOracle,
) -> Result<TrainingOutput> {
    if oracle.locals.len() != data.num_clients() {
        return Err(invalid("oracle needs one local model per client"));
    }
    run(model, data, config, seed, Some(oracle))
}

fn record(
    round: usize,
    global: &[f64],
    locals: &[ModelVector],
    oracle: &TraceOracle,
    start: Instant,
) -> RoundRecord {
    RoundRecord {
        round,
        global_dist2: Some(dist2(global, &oracle.global)),
        client_dist2: locals.iter().zip(&oracle.locals).map(|(w, o)| dist2(w, o)).collect(),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    }
}

fn run(
    model: &LossModel,
    data: &FederatedDataset,
    config: &AlgorithmConfig,
    seed: u64,
    oracle: Option<&TraceOracle>,
) -> Result<TrainingOutput> {
    validate_inputs(model, data)?;
    config.require_exact_support(model)?;
    let lambda = config.lambda;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid(format!(
            "SoftFedAvg needs lambda > 0 (use pure local training for lambda = 0), got {lambda}"
        )));
    }
    let m = data.num_clients();
    let p = data.weights();
    let domain = &model.domain;

    let (rounds, local_rule, final_steps) = if config.auto_rounds {
        let req = required_rounds(lambda, p, &data.sizes(), &config.constants, config.mode)?;
        (req.t_min, StepRule::Linear { c1: config.constants.c1 }, req.k_final_min)
    } else {
        (config.rounds, config.local_steps, config.final_steps)
    };
    if config.strict_rounds && !config.auto_rounds {
        let issues = super::check_rounds(config, model, data)?;
        if !issues.is_empty() {
            return Err(Error::Config(issues.join("; ")));
        }
    }

    if config.solver == Solver::Exact {
        let (g, locals) = soft_sharing_oracle_quadratic(data, lambda, p, domain)?;
        let mut out = TrainingOutput::new(locals, Some(g));
        out.lambda = lambda;
        return Ok(out);
    }
    if final_steps == 0 {
        return Err(Error::Config("SoftFedAvg needs final_steps >= 1".into()));
    }

    let mu = config.mu(model);
    let inner = StepSchedule::InnerProx { mu, lambda };
    let outer = StepSchedule::Outer { mu, lambda };
    inner.validate()?;
    outer.validate()?;
    let b_glob = config.client_batch_size(m)?;
    let mut states = client_states(data, config, seed)?;
    let mut server_rng = stream(seed, Purpose::ClientSampling, 0, 0);
    let mut client_sampler = MinibatchSampler::new(m, b_glob)?;
    let deterministic = client_sampler.is_full() && states.iter().all(|s| s.sampler.is_full());

    let mut w_glob = domain.center().clone();
    let mut locals = vec![domain.center().clone(); m];
    let start = Instant::now();
    let mut trace = Vec::new();
    if let Some(o) = oracle {
        trace.push(record(0, &w_glob, &locals, o, start));
    }
    let dim = model.dim();
    let mut sum = vec![0.0; dim];
    let mut next = vec![0.0; dim];
    let mut prev_locals = locals.clone();
    for t in 0..rounds {
        let batch = sample_clients(&mut client_sampler, &mut server_rng);
        let k = local_rule.steps(t, lambda, model, mu);
        let mut all_fixed = true;
        for &i in &batch {
            let st = &mut states[i];
            let run = run_projected_sgd(
                model,
                data.client(i),
                domain,
                Some(Anchor { g: &w_glob, lambda }),
                &inner,
                t,
                0,
                k,
                &mut st.sampler,
                &mut st.rng,
                &mut locals[i],
                None,
            );
            all_fixed &= run.fixed_point;
        }
        let eta = outer.value(t, 0);
        let c = lambda * m as f64 * eta / batch.len() as f64;
        sum.iter_mut().for_each(|s| *s = 0.0);
        for &i in &batch {
            for ((s, g), wi) in sum.iter_mut().zip(w_glob.iter()).zip(locals[i].iter()) {
                *s += p[i] * (g - wi);
            }
        }
        for ((nx, g), s) in next.iter_mut().zip(w_glob.iter()).zip(&sum) {
            *nx = g - c * s;
        }
        // A round that changes nothing repeats forever: local runs ended at a
        // fixed point (longer budgets change nothing) and the smaller server
        // step cannot move an unmoved global model.
        let frozen =
            deterministic && oracle.is_none() && all_fixed && next == *w_glob && locals == prev_locals;
        domain.project_in_place(&mut next);
        w_glob.copy_from_slice(&next);
        if let Some(o) = oracle {
            trace.push(record(t + 1, &w_glob, &locals, o, start));
        }
        if frozen {
            break;
        }
        if deterministic {
            prev_locals.clone_from(&locals);
        }
    }

    for (i, st) in states.iter_mut().enumerate() {
        run_projected_sgd(
            model,
            data.client(i),
            domain,
            Some(Anchor { g: &w_glob, lambda }),
            &inner,
            rounds,
            0,
            final_steps,
            &mut st.sampler,
            &mut st.rng,
            &mut locals[i],
            None,
        );
    }
    let mut out = TrainingOutput::new(locals, Some(w_glob));
    out.trace = trace;
    out.lambda = lambda;
    out.rounds = rounds;
    out.final_steps = final_steps;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::LocalBatch;
    use crate::instance::{ClientDataset, DataPoint};

    fn scalar_data(groups: &[&[f64]]) -> FederatedDataset {
        let clients = groups
            .iter()
            .enumerate()
            .map(|(i, g)| {
                ClientDataset::new(i, g.iter().map(|v| DataPoint::Plain { z: vec![*v] }).collect()).unwrap()
            })
            .collect();
        FederatedDataset::new(clients).unwrap()
    }

    fn quad1() -> LossModel {
        LossModel::quadratic(1.0, ProjectionDomain::centered(1, 10.0).unwrap()).unwrap()
    }

    #[test]
    fn oracle_by_hand() {
        let data = scalar_data(&[&[0.0], &[2.0]]);
        let (g, l) = soft_sharing_oracle_quadratic(&data, 1.0, &[0.5, 0.5], &quad1().domain).unwrap();
        assert_eq!(g[0], 1.0);
        assert_eq!((l[0][0], l[1][0]), (0.5, 1.5));
        let homo = scalar_data(&[&[3.0], &[3.0]]);
        let (g, l) = soft_sharing_oracle_quadratic(&homo, 4.0, &[0.5, 0.5], &quad1().domain).unwrap();
        assert_eq!(g[0], 3.0);
        assert!(l.iter().all(|w| w[0] == 3.0));
    }

    #[test]
    fn rejects_zero_lambda() {
        let data = scalar_data(&[&[0.0], &[2.0]]);
        let cfg = AlgorithmConfig { lambda: 0.0, ..Default::default() };
        assert!(soft_fed_avg(&quad1(), &data, &cfg, 0).is_err());
    }

    #[test]
    fn full_batch_run_reaches_the_oracle() {
        let data = scalar_data(&[&[0.0, 0.4, -0.4], &[2.0, 1.0, 3.0]]);
        let cfg = AlgorithmConfig {
            lambda: 1.0,
            auto_rounds: true,
            local_batch: LocalBatch::Full,
            ..Default::default()
        };
        let out = soft_fed_avg(&quad1(), &data, &cfg, 5).unwrap();
        let (g, l) = soft_sharing_oracle_quadratic(&data, 1.0, data.weights(), &quad1().domain).unwrap();
        assert!(dist2(out.global_model.as_ref().unwrap(), &g) < 1e-20);
        for (a, b) in out.local_models.iter().zip(&l) {
            assert!(dist2(a, b) < 1e-20);
        }
    }

    #[test]
    fn unsampled_clients_stay_at_initialization() {
        // With one of three clients per round and a single round, two clients
        // never join Stage I.
        let data = scalar_data(&[&[1.0], &[2.0], &[3.0]]);
        let cfg = AlgorithmConfig {
            lambda: 1.0,
            rounds: 1,
            final_steps: 1,
            client_batch: Some(1),
            ..Default::default()
        };
        let model = quad1();
        let oracle = TraceOracle { global: ModelVector(vec![0.0]), locals: vec![ModelVector(vec![0.0]); 3] };
        let out = soft_fed_avg_traced(&model, &data, &cfg, 9, &oracle).unwrap();
        let moved = out.trace[1].client_dist2.iter().filter(|d| **d > 0.0).count();
        assert_eq!(moved, 1);
        assert_eq!(out.trace.len(), 2);
    }
}
