use std::path::Path;

use pfedlab::harness::{run_scaling_experiment, ExperimentConfig, RunOptions};

#[test]
fn logistic_sgd_risk_falls_with_sample_size() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/logistic_scaling.toml");
    let cfg = ExperimentConfig::from_path(path).unwrap();
    let rep = run_scaling_experiment(&cfg, RunOptions { timing: false, strict_rounds: false }).unwrap();
    for c in &rep.curves {
        assert!(c.slope > -1.3 && c.slope < -0.7, "{}: slope {}", c.algorithm, c.slope);
        assert!(c.mean_aer.windows(2).all(|w| w[1] < w[0]), "{:?}", c.mean_aer);
    }
}
