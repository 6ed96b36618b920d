use rand::Rng;

use super::{validate_inputs, AlgorithmConfig, Solver, TrainingOutput};
use crate::error::{Error, Result};
use crate::instance::{FederatedDataset, LossModel};
use crate::linalg::weighted_sum;
use crate::optim::{run_projected_sgd, MinibatchSampler, StepSchedule};
use crate::rng::{stream, Purpose, StreamRng};

/// Per-client SGD state that persists across rounds.
pub(super) struct ClientState {
    pub rng: StreamRng,
    pub sampler: MinibatchSampler,
}

pub(super) fn client_states(
    data: &FederatedDataset,
    config: &AlgorithmConfig,
    seed: u64,
) -> Result<Vec<ClientState>> {
    data.clients()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            Ok(ClientState {
                rng: stream(seed, Purpose::LocalSgd, i as u64, 0),
                sampler: MinibatchSampler::new(c.len(), config.local_batch.for_client(c.len()))?,
            })
        })
        .collect()
}

/// Uniform client batch without replacement, in ascending order. Draws no
/// randomness when every client participates.
pub(super) fn sample_clients<R: Rng + ?Sized>(sampler: &mut MinibatchSampler, rng: &mut R) -> Vec<usize> {
    let mut c = sampler.sample(rng).to_vec();
    c.sort_unstable();
    c
}

/// Every client fits its own data; nothing is shared.
///
/// With the SGD solver each client runs `final_steps` projected SGD steps
/// from the domain center under the plain strongly convex schedule.
pub fn pure_local_training(
    model: &LossModel,
    data: &FederatedDataset,
    config: &AlgorithmConfig,
    seed: u64,
) -> Result<TrainingOutput> {
    validate_inputs(model, data)?;
    config.require_exact_support(model)?;
    let domain = &model.domain;
    let locals = match config.solver {
        Solver::Exact => {
            data.clients().iter().map(|c| domain.project(&c.plain_mean()?)).collect::<Result<Vec<_>>>()?
        }
        Solver::Sgd => {
            if config.final_steps == 0 {
                return Err(Error::Config("pure local training needs final_steps >= 1".into()));
            }
            let schedule = StepSchedule::PlainSc { mu: config.mu(model) };
            schedule.validate()?;
            let mut states = client_states(data, config, seed)?;
            data.clients()
                .iter()
                .zip(states.iter_mut())
                .map(|(c, st)| {
                    let mut w = domain.center().clone();
                    run_projected_sgd(
                        model,
                        c,
                        domain,
                        None,
                        &schedule,
                        0,
                        0,
                        config.final_steps,
                        &mut st.sampler,
                        &mut st.rng,
                        &mut w,
                        None,
                    );
                    w
                })
                .collect()
        }
    };
    let mut out = TrainingOutput::new(locals, None);
    if config.solver == Solver::Sgd {
        out.final_steps = config.final_steps;
    }
    Ok(out)
}

/// Local SGD with periodic weighted averaging; every client receives the
/// final shared model.
///
/// Round `t` samples a client batch `C_t`, runs `local_steps` projected SGD
/// steps on each sampled client from the current global model (the step
/// counter continues across rounds), then sets
/// `w <- w - (m eta / |C_t|) sum_{i in C_t} p_i (w - w_i)` and projects.
pub fn fed_avg(
    model: &LossModel,
    data: &FederatedDataset,
    config: &AlgorithmConfig,
    seed: u64,
) -> Result<TrainingOutput> {
    validate_inputs(model, data)?;
    config.require_exact_support(model)?;
    let m = data.num_clients();
    let p = data.weights();
    let domain = &model.domain;
    let global = match config.solver {
        Solver::Exact => {
            let means = data.clients().iter().map(|c| c.plain_mean()).collect::<Result<Vec<_>>>()?;
            domain.project(&weighted_sum(model.dim(), p.iter().copied().zip(means.iter().map(|v| &v[..]))))?
        }
        Solver::Sgd => {
            let b_glob = config.client_batch_size(m)?;
            if config.rounds == 0 {
                return Err(Error::Config("FedAvg needs at least one round".into()));
            }
            let schedule = StepSchedule::PlainSc { mu: config.mu(model) };
            schedule.validate()?;
            let mut states = client_states(data, config, seed)?;
            let mut server_rng = stream(seed, Purpose::ClientSampling, 0, 0);
            let mut client_sampler = MinibatchSampler::new(m, b_glob)?;
            let mut w = domain.center().clone();
            let mut local = vec![0.0; model.dim()];
            let mut acc = vec![0.0; model.dim()];
            let mut offset = 0;
            for t in 0..config.rounds {
                let k = config.local_steps.steps(t, config.lambda, model, config.mu(model));
                let batch = sample_clients(&mut client_sampler, &mut server_rng);
                let c = m as f64 * config.aggregation_step / batch.len() as f64;
                acc.iter_mut().for_each(|a| *a = 0.0);
                let mut mass = 0.0;
                for &i in &batch {
                    local.copy_from_slice(&w);
                    let st = &mut states[i];
                    run_projected_sgd(
                        model,
                        data.client(i),
                        domain,
                        None,
                        &schedule,
                        0,
                        offset,
                        k,
                        &mut st.sampler,
                        &mut st.rng,
                        &mut local,
                        None,
                    );
                    crate::linalg::axpy(p[i], &local, &mut acc);
                    mass += p[i];
                }
                offset += k;
                // (1 - c mass) w + c sum p_i w_i, which is exact when c mass = 1.
                let keep = 1.0 - c * mass;
                for (wj, aj) in w.iter_mut().zip(&acc) {
                    *wj = keep * *wj + c * aj;
                }
                domain.project_in_place(&mut w);
            }
            w
        }
    };
    let mut out = TrainingOutput::new(vec![global.clone(); m], Some(global));
    if config.solver == Solver::Sgd {
        out.rounds = config.rounds;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::LocalBatch;
    use crate::instance::{ClientDataset, DataPoint, ModelVector};
    use crate::optim::ProjectionDomain;

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
    fn exact_solutions() {
        let data = scalar_data(&[&[-1.0, 1.0], &[2.0, 2.0]]);
        let model = quad1();
        let plt = pure_local_training(&model, &data, &AlgorithmConfig::exact(), 0).unwrap();
        assert_eq!(plt.local_models, vec![ModelVector(vec![0.0]), ModelVector(vec![2.0])]);
        assert!(plt.global_model.is_none());
        let fa = fed_avg(&model, &data, &AlgorithmConfig::exact(), 0).unwrap();
        assert_eq!(fa.global_model.unwrap()[0], 1.0);
        assert!(fa.local_models.iter().all(|w| w[0] == 1.0));
    }

    #[test]
    fn exact_requires_quadratic() {
        let model = LossModel::logistic(1.0, Default::default(), ProjectionDomain::centered(1, 1.0).unwrap())
            .unwrap();
        let data = FederatedDataset::new(vec![ClientDataset::new(
            0,
            vec![DataPoint::Labeled { x: vec![0.5], y: crate::instance::Label::Pos }],
        )
        .unwrap()])
        .unwrap();
        assert!(matches!(
            pure_local_training(&model, &data, &AlgorithmConfig::exact(), 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn single_client_fedavg_is_local_training() {
        let data = scalar_data(&[&[0.3, -1.2, 2.2, 0.9, 1.4]]);
        let model = quad1();
        let cfg = AlgorithmConfig {
            rounds: 8,
            local_steps: super::super::StepRule::Fixed { k: 5 },
            final_steps: 40,
            local_batch: LocalBatch::Size(2),
            ..Default::default()
        };
        let fa = fed_avg(&model, &data, &cfg, 17).unwrap();
        let plt = pure_local_training(&model, &data, &cfg, 17).unwrap();
        assert_eq!(fa.local_models, plt.local_models);
    }

    #[test]
    fn fedavg_models_are_shared() {
        let data = scalar_data(&[&[0.0, 1.0], &[4.0, 5.0, 6.0], &[-2.0]]);
        let cfg =
            AlgorithmConfig { client_batch: Some(2), local_batch: LocalBatch::Size(1), ..Default::default() };
        let out = fed_avg(&quad1(), &data, &cfg, 3).unwrap();
        assert!(out.local_models.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(out.local_models[0], *out.global_model.as_ref().unwrap());
        let bad = AlgorithmConfig { client_batch: Some(0), ..Default::default() };
        assert!(matches!(fed_avg(&quad1(), &data, &bad, 0), Err(Error::Config(_))));
    }
}
