//! Acceptance gate. Every criterion runs at its stated tolerance and prints
//! one PASS or FAIL line; the test fails if any criterion does.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::Rng;

use pfedlab::algorithms::{
    fed_avg, soft_fed_avg, soft_sharing_oracle_quadratic, AlgorithmConfig, Branch, LocalBatch,
};
use pfedlab::evaluation::{population_excess_risk, replace_record};
use pfedlab::harness::{
    run_algorithm, run_convergence_diagnostics, run_phase_transition_sweep, run_scaling_experiment,
    run_stability_experiment, AlgorithmKind, ExperimentConfig, RunOptions,
};
use pfedlab::instance::{generate_instance, DataPoint, Family, HeterogeneityMode, InstanceSpec};
use pfedlab::linalg::dist2;
use pfedlab::optim::minibatch_variance_formula;
use pfedlab::rng::{stream, Purpose};

const QUIET: RunOptions = RunOptions { timing: false, strict_rounds: false };

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::from_path(config_path(name)).unwrap()
}

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn in_band(x: f64, lo: f64, hi: f64) -> bool {
    x >= lo && x <= hi
}

fn phase_transition() -> Outcome {
    let cfg = load("phase_transition.toml");
    let start = Instant::now();
    let res = run_phase_transition_sweep(&cfg, QUIET).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let fa = res.mean_curve("fedavg").unwrap();
    let pl = res.mean_curve("plt").unwrap();
    let at_zero = res.grid[0] == 0.0 && fa[0] < pl[0];
    let large: Vec<usize> =
        (0..res.grid.len()).filter(|&g| res.grid[g] >= 100.0 * res.m_over_n * (1.0 - 1e-12)).collect();
    let plt_wins = !large.is_empty() && large.iter().all(|&g| pl[g] < fa[g]);
    let cross = res.crossover.map(|c| c.relative);
    let cross_ok = cross.is_some_and(|c| in_band(c, 0.1, 10.0));
    outcome(
        at_zero && plt_wins && cross_ok && secs < 300.0,
        format!(
            "R2=0 fedavg {:.3e} < plt {:.3e}: {at_zero}; plt lower at >= 100 m/N: {plt_wins}; crossover {:?} m/N; {secs:.2}s",
            fa[0], pl[0], cross
        ),
    )
}

fn slope_of(name: &str, algorithm: &str) -> (f64, f64) {
    let rep = run_scaling_experiment(&load(name), QUIET).unwrap();
    let c = rep.curves.iter().find(|c| c.algorithm == algorithm).unwrap();
    (c.slope, c.tail_slope)
}

fn plt_scaling() -> Outcome {
    let (slope, _) = slope_of("plt_scaling.toml", "plt");
    outcome(in_band(slope, -1.3, -0.7), format!("slope vs n_i {slope:.4}"))
}

fn fedavg_scaling() -> Outcome {
    let (slope, _) = slope_of("fedavg_scaling.toml", "fedavg");
    let (_, tail) = slope_of("fedavg_plateau.toml", "fedavg");
    let ok = in_band(slope, -1.3, -0.7) && tail > -0.3 && tail <= 0.1;
    outcome(ok, format!("homogeneous slope {slope:.4}; plateau upper-half slope {tail:.4}"))
}

/// `E |mean of a B-subset|^2` by walking every subset of size `b`.
fn enumerate_second_moment(xs: &[Vec<f64>], b: usize) -> f64 {
    let n = xs.len();
    let d = xs[0].len();
    let (mut total, mut count) = (0.0, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != b {
            continue;
        }
        let mut s = vec![0.0; d];
        for (i, x) in xs.iter().enumerate() {
            if mask & (1 << i) != 0 {
                s.iter_mut().zip(x).for_each(|(a, v)| *a += v);
            }
        }
        total += s.iter().map(|v| (v / b as f64).powi(2)).sum::<f64>();
        count += 1;
    }
    total / count as f64
}

fn minibatch_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for set in 0..20u64 {
        let mut rng = stream(4242, Purpose::DataGeneration, set, 0);
        for n in 1..=8 {
            let xs: Vec<Vec<f64>> =
                (0..n).map(|_| (0..3).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
            for b in 1..=n {
                let exact = enumerate_second_moment(&xs, b);
                let formula = minibatch_variance_formula(&xs, b).unwrap();
                worst = worst.max((exact - formula).abs() / formula.abs());
                cases += 1;
            }
        }
    }
    outcome(worst <= 1e-12, format!("{cases} cases, worst relative error {worst:.2e}"))
}

fn oracle_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut slowest: f64 = 0.0;
    for lambda in [0.1, 1.0, 10.0] {
        for seed in 1..=20 {
            let spec = InstanceSpec::balanced(Family::Quadratic { rho: 1.0 }, 3, 16, 2, 0.5);
            let (inst, data) = generate_instance(&spec, seed).unwrap();
            let domain = &inst.loss.domain;
            let cfg = AlgorithmConfig {
                lambda,
                auto_rounds: true,
                local_batch: LocalBatch::Full,
                ..Default::default()
            };
            let t = Instant::now();
            let out = soft_fed_avg(&inst.loss, &data, &cfg, seed).unwrap();
            slowest = slowest.max(t.elapsed().as_secs_f64());
            let (g, locals) = soft_sharing_oracle_quadratic(&data, lambda, data.weights(), domain).unwrap();
            let mut err = dist2(out.global_model.as_ref().unwrap(), &g).sqrt();
            for (w, o) in out.local_models.iter().zip(&locals) {
                err = err.max(dist2(w, o).sqrt());
            }
            worst = worst.max(err / domain.diameter());
        }
    }
    outcome(worst <= 0.05, format!("worst distance {worst:.3e} D over 60 runs, slowest {slowest:.2}s"))
}

fn convergence_bounds() -> Outcome {
    let cfg = load("diagnostics.toml");
    let seeds = cfg.seeds.seeds();
    let rows = run_convergence_diagnostics(cfg.diagnostics.as_ref().unwrap(), &seeds).unwrap();
    let failed: Vec<String> =
        rows.iter().filter(|r| !r.bound_satisfied).map(|r| format!("{:?}@{}", r.kind, r.step)).collect();
    let worst = rows.iter().map(|r| r.mean / r.bound).fold(0.0, f64::max);
    outcome(
        failed.is_empty() && seeds.len() >= 100,
        format!(
            "{} rows over {} seeds, worst mean/bound {worst:.3e}, failing {failed:?}",
            rows.len(),
            seeds.len()
        ),
    )
}

fn stability_scaling() -> Outcome {
    let table = run_stability_experiment(&load("stability.toml"), QUIET).unwrap();
    let slope_ok = in_band(table.slope, -1.3, -0.7);
    // Replacing record j of client i moves the exact FedAvg model by
    // p_i (z_new - z_j) / n_i.
    let mut worst: f64 = 0.0;
    for seed in 1..=20 {
        let spec = InstanceSpec::balanced(Family::Quadratic { rho: 1.0 }, 4, 10 + seed as usize, 3, 0.5);
        let (inst, data) = generate_instance(&spec, seed).unwrap();
        let exact = AlgorithmConfig::exact();
        let base = fed_avg(&inst.loss, &data, &exact, seed).unwrap();
        let i = (seed % 4) as usize;
        let mut rng = stream(seed, Purpose::Stability, 99, 0);
        let z = inst.sample_point(i, &mut rng);
        let (DataPoint::Plain { z: z_new }, DataPoint::Plain { z: z_old }) = (&z, &data.client(i).points[0])
        else {
            unreachable!()
        };
        let moved =
            fed_avg(&inst.loss, &replace_record(&data, i, 0, z.clone()).unwrap(), &exact, seed).unwrap();
        let scale = data.weights()[i] / data.client(i).len() as f64;
        let g0 = base.global_model.as_ref().unwrap();
        let g1 = moved.global_model.as_ref().unwrap();
        for k in 0..3 {
            worst = worst.max((g1[k] - g0[k] - scale * (z_new[k] - z_old[k])).abs());
        }
    }
    outcome(
        slope_ok && worst <= 1e-9,
        format!("plt-exact gamma slope {:.4}; fedavg-exact shift error {worst:.2e}", table.slope),
    )
}

fn interpolation_monotonicity() -> Outcome {
    let lambdas: Vec<f64> = (-12..=12).map(|k| 10f64.powf(k as f64 / 4.0)).collect();
    let mut ok = true;
    for seed in 1..=5 {
        let spec = InstanceSpec::balanced(Family::Quadratic { rho: 1.0 }, 5, 12, 3, 0.8);
        let (inst, data) = generate_instance(&spec, seed).unwrap();
        let p = data.weights();
        let domain = &inst.loss.domain;
        let (fa, plt) = soft_sharing_oracle_quadratic(&data, 0.0, p, domain).unwrap();
        let mut prev: Option<(f64, f64)> = None;
        for &l in &lambdas {
            let (_, locals) = soft_sharing_oracle_quadratic(&data, l, p, domain).unwrap();
            let to_plt: f64 = locals.iter().zip(&plt).map(|(w, o)| dist2(w, o)).sum();
            let to_fa: f64 = locals.iter().map(|w| dist2(w, &fa)).sum();
            if let Some((a, b)) = prev {
                ok &= to_plt >= a && to_fa <= b;
            }
            prev = Some((to_plt, to_fa));
        }
    }
    outcome(ok, format!("{} lambdas from 1e-3 to 1e3, 5 instances", lambdas.len()))
}

fn dichotomous_dominance() -> Outcome {
    let cfg = load("phase_transition.toml");
    let res = run_phase_transition_sweep(&cfg, QUIET).unwrap();
    let fa = res.mean_curve("fedavg").unwrap();
    let pl = res.mean_curve("plt").unwrap();
    let di = res.mean_curve("dichotomous").unwrap();
    let worst_ratio = (0..fa.len()).map(|g| di[g] / fa[g].min(pl[g])).fold(0.0, f64::max);

    let selector = cfg.algorithms.iter().find(|a| a.algorithm == AlgorithmKind::Selector).unwrap();
    let extremes = [0, res.grid.len() - 2, res.grid.len() - 1];
    let mut freqs = Vec::new();
    for &g in &extremes {
        let mut spec = cfg.instance.clone();
        spec.target_r2 = res.grid[g];
        let mut agree = 0;
        let seeds = cfg.seeds.seeds();
        for &seed in &seeds {
            let (inst, data) = generate_instance(&spec, seed).unwrap();
            let (out, _) = run_algorithm(
                selector,
                &inst,
                &data,
                inst.heterogeneity_r2(HeterogeneityMode::Aer),
                seed,
                QUIET,
            )
            .unwrap();
            let aer = |kind| {
                let spec = cfg.algorithms.iter().find(|a| a.algorithm == kind).unwrap();
                let (o, _) = run_algorithm(spec, &inst, &data, 0.0, seed, QUIET).unwrap();
                let nw = data.size_weights();
                (0..data.num_clients())
                    .map(|i| {
                        nw[i] * population_excess_risk(&inst, i, &o.local_models[i], 0, seed).unwrap().value
                    })
                    .sum::<f64>()
            };
            let best = if aer(AlgorithmKind::FedAvg) <= aer(AlgorithmKind::Plt) {
                Branch::FedAvg
            } else {
                Branch::PureLocal
            };
            agree += usize::from(out.branch == Some(best));
        }
        freqs.push(agree as f64 / seeds.len() as f64);
    }
    let ok = worst_ratio <= 1.1 && freqs.iter().all(|f| *f >= 0.9);
    outcome(
        ok,
        format!(
            "worst dichotomous/min ratio {worst_ratio:.4}; selector agreement at R2 = {:?} m/N: {freqs:?}",
            extremes.iter().map(|&g| res.grid[g] / res.m_over_n).collect::<Vec<_>>()
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_path("phase_transition.toml");
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_pfedlab"))
            .args(["sweep", "--no-timing", "--threads", threads, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        std::fs::read(out).unwrap()
    };
    let a = run("a.csv", "1");
    let b = run("b.csv", "1");
    let c = run("c.csv", "4");
    let ok = !a.is_empty() && a == b && a == c;
    outcome(ok, format!("{} bytes, identical across reruns and thread counts: {ok}", a.len()))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 10] = [
        ("phase transition", phase_transition),
        ("local training scaling", plt_scaling),
        ("FedAvg scaling and plateau", fedavg_scaling),
        ("minibatch second moment", minibatch_identity),
        ("oracle equivalence", oracle_equivalence),
        ("convergence bounds", convergence_bounds),
        ("stability scaling", stability_scaling),
        ("interpolation monotonicity", interpolation_monotonicity),
        ("dichotomous dominance", dichotomous_dominance),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    let mut err = std::io::stderr();
    for (k, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        writeln!(err, "criterion {:>2} [{tag}] {name}: {}", k + 1, o.detail).unwrap();
        if !o.pass {
            failed.push(k + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
