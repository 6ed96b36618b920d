use pfedlab::algorithms::{fed_avg, AlgorithmConfig, TrainingOutput};
use pfedlab::evaluation::federated_stability_estimate;
use pfedlab::instance::{
    generate_instance, ClientDataset, Family, FederatedDataset, InstanceSpec, ProblemInstance,
};

fn setup(n0: usize, seed: u64) -> (ProblemInstance, FederatedDataset) {
    let mut spec = InstanceSpec::balanced(Family::Quadratic { rho: 1.0 }, 3, 40, 2, 0.3);
    spec.n[0] = n0;
    generate_instance(&spec, seed).unwrap()
}

/// Keeps the weights fixed so that only `n_0` changes between runs.
fn with_weights(data: &FederatedDataset, p: &[f64]) -> FederatedDataset {
    FederatedDataset::with_weights(data.clients().to_vec(), p.to_vec()).unwrap()
}

#[test]
fn doubling_a_clients_data_halves_fedavg_stability() {
    let p = [0.5, 0.25, 0.25];
    let trainer = |d: &FederatedDataset, s: u64| -> pfedlab::Result<TrainingOutput> {
        fed_avg(&setup(1, 0).0.loss, d, &AlgorithmConfig::exact(), s)
    };
    let mut ratios = Vec::new();
    for seed in 1..=10 {
        let gamma = |n0| {
            let (inst, data) = setup(n0, seed);
            let data = with_weights(&data, &p);
            federated_stability_estimate(&trainer, &inst, &data, 0, 30, 30, seed, 0).unwrap().gamma
        };
        ratios.push(gamma(40) / gamma(20));
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((mean - 0.5).abs() <= 0.1, "ratio {mean}");
}

#[test]
fn constant_trainer_reports_zero() {
    let (inst, data) = setup(10, 2);
    let trainer = |d: &FederatedDataset, _s: u64| -> pfedlab::Result<TrainingOutput> {
        let zero = vec![0.0; d.dim()];
        let locals = d.clients().iter().map(|_: &ClientDataset| zero.clone().into()).collect();
        Ok(TrainingOutput {
            local_models: locals,
            global_model: None,
            trace: Vec::new(),
            branch: None,
            lambda: 0.0,
            rounds: 0,
            final_steps: 0,
        })
    };
    let e = federated_stability_estimate(&trainer, &inst, &data, 1, 5, 5, 3, 0).unwrap();
    assert_eq!(e.gamma, 0.0);
}
