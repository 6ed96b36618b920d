use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AlgorithmKind, AlgorithmSpec, ExperimentConfig, SweepAxis};
use super::output::ResultRow;
use super::stats;
use crate::algorithms::{
    check_rounds, dichotomous_strategy, fed_avg, pure_local_training, select_lambda, soft_fed_avg,
    test_error_selector, SelectorConfig, Solver, TrainingOutput,
};
use crate::error::{Error, Result};
use crate::evaluation::risk_report;
use crate::instance::{
    generate_instance, FederatedDataset, HeterogeneityMode, InstanceSpec, ProblemInstance,
};

/// Run-time switches that are not part of the experiment file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Record `wall_ms`; when off the column is zero and output is
    /// byte-reproducible.
    pub timing: bool,
    /// Fail SoftFedAvg runs whose rounds fall short of the requirements.
    pub strict_rounds: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { timing: true, strict_rounds: false }
    }
}

/// Trains one algorithm. `r2` is the heterogeneity handed to the rules that
/// use it. Round-count shortfalls are returned as warnings unless strict.
pub fn run_algorithm(
    spec: &AlgorithmSpec,
    instance: &ProblemInstance,
    data: &FederatedDataset,
    r2: f64,
    seed: u64,
    opts: RunOptions,
) -> Result<(TrainingOutput, Vec<String>)> {
    let model = &instance.loss;
    let mut warnings = Vec::new();
    let fa_cfg = spec.fedavg.as_ref().unwrap_or(&spec.config);
    let plt_cfg = spec.plt.as_ref().unwrap_or(&spec.config);
    let out = match spec.algorithm {
        AlgorithmKind::FedAvg => fed_avg(model, data, &spec.config, seed)?,
        AlgorithmKind::Plt => pure_local_training(model, data, &spec.config, seed)?,
        AlgorithmKind::Sfa => {
            let mut cfg = spec.config.clone();
            if spec.select_lambda {
                let (lambda, _) = select_lambda(
                    r2,
                    data.weights(),
                    &data.sizes(),
                    cfg.mu(model),
                    &cfg.constants,
                    cfg.mode,
                    model.domain.diameter(),
                )?;
                cfg.lambda = lambda;
            }
            cfg.strict_rounds |= opts.strict_rounds;
            if !cfg.auto_rounds && cfg.solver == Solver::Sgd {
                warnings.extend(check_rounds(&cfg, model, data)?);
            }
            soft_fed_avg(model, data, &cfg, seed)?
        }
        AlgorithmKind::Dichotomous => dichotomous_strategy(model, data, r2, fa_cfg, plt_cfg, seed)?,
        AlgorithmKind::Selector => {
            let cfg = SelectorConfig {
                holdout_fraction: spec.holdout_fraction,
                fedavg: fa_cfg.clone(),
                plt: plt_cfg.clone(),
            };
            test_error_selector(model, data, &cfg, seed)?
        }
    };
    Ok((out, warnings))
}

/// Rows of a grid run in (grid index, seed, algorithm) order.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<ResultRow>,
    /// Axis value of each grid point: absolute R^2, `n_i` or `N`.
    pub grid: Vec<f64>,
    pub axis: SweepAxis,
    /// `m/N` of the base instance.
    pub m_over_n: f64,
    pub seeds: usize,
    pub algorithms: Vec<String>,
    pub warnings: Vec<String>,
    pub crossover: Option<Crossover>,
}

/// Mean AER of one algorithm at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub grid_index: usize,
    pub axis_value: f64,
    pub algorithm: String,
    pub mean_aer: f64,
    pub stderr: f64,
    pub mean_ier_max: f64,
}

impl SweepResult {
    /// Rows of grid point `g`.
    pub fn grid_rows(&self, g: usize) -> &[ResultRow] {
        let per = self.seeds * self.algorithms.len();
        &self.rows[g * per..(g + 1) * per]
    }

    pub fn summary(&self) -> Vec<GridSummary> {
        let mut out = Vec::new();
        for (g, &x) in self.grid.iter().enumerate() {
            let rows = self.grid_rows(g);
            for a in &self.algorithms {
                let aer: Vec<f64> = rows.iter().filter(|r| &r.algorithm == a).map(|r| r.aer).collect();
                let ier: Vec<f64> = rows.iter().filter(|r| &r.algorithm == a).map(|r| r.ier_max).collect();
                out.push(GridSummary {
                    grid_index: g,
                    axis_value: x,
                    algorithm: a.clone(),
                    mean_aer: stats::mean(&aer),
                    stderr: stats::stderr(&aer),
                    mean_ier_max: stats::mean(&ier),
                });
            }
        }
        out
    }

    /// Mean AER of `algorithm` at each grid point.
    pub fn mean_curve(&self, algorithm: &str) -> Option<Vec<f64>> {
        if !self.algorithms.iter().any(|a| a == algorithm) {
            return None;
        }
        Some(self.summary().into_iter().filter(|s| s.algorithm == algorithm).map(|s| s.mean_aer).collect())
    }
}

fn grid_specs(config: &ExperimentConfig) -> Result<(SweepAxis, Vec<f64>, Vec<InstanceSpec>)> {
    let base = &config.instance;
    let m = base.n.len();
    let total: usize = base.n.iter().sum();
    let Some(sweep) = &config.sweep else {
        return Ok((SweepAxis::R2, vec![base.target_r2], vec![base.clone()]));
    };
    let mut xs = Vec::new();
    let mut specs = Vec::new();
    for &v in &sweep.values {
        let mut s = base.clone();
        match sweep.axis {
            SweepAxis::R2 => {
                let scale = if sweep.relative_to_m_over_n { m as f64 / total as f64 } else { 1.0 };
                s.target_r2 = v * scale;
                xs.push(s.target_r2);
            }
            SweepAxis::N => {
                s.n = vec![v as usize; m];
                xs.push(v);
            }
            SweepAxis::Total => {
                let t = v as usize;
                if t < m {
                    return Err(Error::Config(format!("N = {t} leaves some of the {m} clients empty")));
                }
                s.n = (0..m).map(|i| t / m + usize::from(i < t % m)).collect();
                xs.push(v);
            }
        }
        specs.push(s);
    }
    Ok((sweep.axis, xs, specs))
}

struct TaskOutput {
    rows: Vec<ResultRow>,
    warnings: Vec<String>,
}

fn run_task(
    config: &ExperimentConfig,
    spec: &InstanceSpec,
    seed: u64,
    opts: RunOptions,
) -> Result<TaskOutput> {
    let (instance, data) = generate_instance(spec, seed)?;
    let (rows, warnings) = run_on_instance(config, &instance, &data, spec.mode, seed, opts)?;
    Ok(TaskOutput { rows, warnings })
}

/// Runs every configured algorithm on one instance and evaluates it. The
/// heterogeneity handed to the algorithms is the instance's own, measured
/// in `mode`.
pub fn run_on_instance(
    config: &ExperimentConfig,
    instance: &ProblemInstance,
    data: &FederatedDataset,
    mode: HeterogeneityMode,
    seed: u64,
    opts: RunOptions,
) -> Result<(Vec<ResultRow>, Vec<String>)> {
    let r2 = instance.heterogeneity_r2(mode);
    let family = if instance.loss.is_quadratic() { "quadratic" } else { "logistic" };
    let mut rows = Vec::with_capacity(config.algorithms.len());
    let mut warnings = Vec::new();
    for a in &config.algorithms {
        let start = Instant::now();
        let (out, w) = run_algorithm(a, instance, data, r2, seed, opts)?;
        let report = risk_report(instance, data, &out, data.weights(), config.evaluation.budget, seed)?;
        let wall_ms = if opts.timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
        warnings.extend(w.into_iter().map(|msg| format!("{} (seed {seed}): {msg}", a.label())));
        rows.push(ResultRow {
            experiment_id: config.experiment_id.clone(),
            seed,
            family: family.to_string(),
            m: data.num_clients(),
            total_n: data.total_points(),
            d: instance.dim(),
            r2_planted: r2,
            r2_mode: mode.as_str().to_string(),
            algorithm: a.label().to_string(),
            lambda: out.lambda,
            rounds: out.rounds,
            final_steps: out.final_steps,
            aer: report.aer,
            ier_max: report.ier_max(),
            stderr: report.stderr(),
            wall_ms,
            ier_client: report.per_client_ier,
        });
    }
    Ok((rows, warnings))
}

/// Runs every algorithm at every (grid point, seed) pair on the current
/// rayon pool. Each task derives its own streams from its seed, and results
/// are gathered in grid, seed, algorithm order.
pub fn run_grid(config: &ExperimentConfig, opts: RunOptions) -> Result<SweepResult> {
    config.validate()?;
    if config.algorithms.is_empty() {
        return Err(Error::Config("no algorithms configured".into()));
    }
    let (axis, grid, specs) = grid_specs(config)?;
    let seeds = config.seeds.seeds();
    let tasks: Vec<(usize, u64)> =
        (0..specs.len()).flat_map(|g| seeds.iter().map(move |&s| (g, s))).collect();
    let outputs =
        tasks.par_iter().map(|&(g, s)| run_task(config, &specs[g], s, opts)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(tasks.len() * config.algorithms.len());
    let mut warnings = Vec::new();
    for t in outputs {
        rows.extend(t.rows);
        warnings.extend(t.warnings);
    }
    let total: usize = config.instance.n.iter().sum();
    Ok(SweepResult {
        rows,
        grid,
        axis,
        m_over_n: config.instance.n.len() as f64 / total as f64,
        seeds: seeds.len(),
        algorithms: config.algorithms.iter().map(|a| a.label().to_string()).collect(),
        warnings,
        crossover: None,
    })
}

/// Where the FedAvg and local-training mean AER curves cross.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossover {
    pub r2: f64,
    /// `r2` in units of `m/N`.
    pub relative: f64,
    /// Bracketing grid points.
    pub lower: f64,
    pub upper: f64,
}

/// First sign change of `fa - plt` from negative to nonnegative, placed by
/// linear interpolation of the gap in `log x` (linear in `x` when the lower
/// bracket is zero).
pub(crate) fn find_crossover(x: &[f64], fa: &[f64], plt: &[f64]) -> Option<(f64, f64, f64)> {
    let gap: Vec<f64> = fa.iter().zip(plt).map(|(a, b)| a - b).collect();
    (0..x.len().saturating_sub(1)).find_map(|k| {
        let (g0, g1) = (gap[k], gap[k + 1]);
        if !(g0 < 0.0 && g1 >= 0.0) {
            return None;
        }
        let f = g0 / (g0 - g1);
        let (x0, x1) = (x[k], x[k + 1]);
        let at = if x0 > 0.0 { (x0.ln() + f * (x1.ln() - x0.ln())).exp() } else { x0 + f * (x1 - x0) };
        Some((at, x0, x1))
    })
}

/// Sweeps R^2 with FedAvg, local training and any other configured
/// algorithms, and locates the crossover of the two baselines.
pub fn run_phase_transition_sweep(config: &ExperimentConfig, opts: RunOptions) -> Result<SweepResult> {
    match &config.sweep {
        Some(s) if s.axis == SweepAxis::R2 => {}
        _ => return Err(Error::Config("a phase-transition sweep needs an r2 sweep axis".into())),
    }
    let n = &config.instance.n;
    if n.iter().any(|&ni| ni != n[0]) {
        return Err(Error::Config("a phase-transition sweep needs balanced client sizes".into()));
    }
    let label = |kind| config.algorithms.iter().find(|a| a.algorithm == kind).map(|a| a.label().to_string());
    let (Some(fa), Some(pl)) = (label(AlgorithmKind::FedAvg), label(AlgorithmKind::Plt)) else {
        return Err(Error::Config("a phase-transition sweep needs fedavg and plt".into()));
    };
    let mut res = run_grid(config, opts)?;
    let fa_curve = res.mean_curve(&fa).expect("label present");
    let pl_curve = res.mean_curve(&pl).expect("label present");
    res.crossover = find_crossover(&res.grid, &fa_curve, &pl_curve).map(|(r2, lower, upper)| Crossover {
        r2,
        relative: r2 / res.m_over_n,
        lower,
        upper,
    });
    Ok(res)
}

/// Log-log fit of one algorithm's mean AER against the sweep axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCurve {
    pub algorithm: String,
    pub x: Vec<f64>,
    pub mean_aer: Vec<f64>,
    pub slope: f64,
    pub slope_stderr: f64,
    /// Fit over the upper half of the grid.
    pub tail_slope: f64,
    pub tail_slope_stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub result: SweepResult,
    pub curves: Vec<ScalingCurve>,
}

/// Runs the grid and fits `log(mean AER)` against `log(axis)` by least
/// squares. Grid points with a zero axis value are left out of the fit.
pub fn run_scaling_experiment(config: &ExperimentConfig, opts: RunOptions) -> Result<ScalingReport> {
    let Some(sweep) = &config.sweep else {
        return Err(Error::Config("a scaling experiment needs a sweep".into()));
    };
    if sweep.values.iter().filter(|v| **v > 0.0).count() < 4 {
        return Err(Error::Config("a scaling experiment needs at least four positive grid points".into()));
    }
    let result = run_grid(config, opts)?;
    let mut curves = Vec::new();
    for a in &result.algorithms {
        let means = result.mean_curve(a).expect("label present");
        let (x, y): (Vec<f64>, Vec<f64>) =
            result.grid.iter().zip(&means).filter(|(x, _)| **x > 0.0).map(|(x, y)| (*x, *y)).unzip();
        let (slope, slope_stderr) = stats::log_log_slope(&x, &y);
        let h = x.len() / 2;
        let (tail_slope, tail_slope_stderr) = stats::log_log_slope(&x[h..], &y[h..]);
        curves.push(ScalingCurve {
            algorithm: a.clone(),
            x,
            mean_aer: means,
            slope,
            slope_stderr,
            tail_slope,
            tail_slope_stderr,
        });
    }
    Ok(ScalingReport { result, curves })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::AlgorithmConfig;
    use crate::harness::{SeedSpec, SweepConfig};
    use crate::instance::Family;

    fn config(values: Vec<f64>) -> ExperimentConfig {
        let mut inst = InstanceSpec::balanced(Family::Quadratic { rho: 1.0 }, 3, 8, 2, 0.0);
        inst.domain = crate::instance::DomainChoice::Fitted { margin: Some(0.5), min_radius: 1.0 };
        ExperimentConfig {
            experiment_id: "unit".into(),
            seeds: SeedSpec::List(vec![5, 6]),
            instance: inst,
            algorithms: vec![
                AlgorithmSpec::new(AlgorithmKind::FedAvg, AlgorithmConfig::exact()),
                AlgorithmSpec::new(AlgorithmKind::Plt, AlgorithmConfig::exact()),
            ],
            evaluation: Default::default(),
            sweep: Some(SweepConfig { axis: SweepAxis::R2, values, relative_to_m_over_n: true }),
            diagnostics: None,
            stability: None,
            output: None,
            format: Default::default(),
        }
    }

    #[test]
    fn row_count_and_order() {
        let cfg = config(vec![0.0, 1.0, 100.0]);
        let res = run_grid(&cfg, RunOptions { timing: false, strict_rounds: false }).unwrap();
        assert_eq!(res.rows.len(), 2 * 3 * 2);
        assert_eq!(res.rows[0].seed, 5);
        assert_eq!(res.rows[1].algorithm, "plt");
        assert_eq!(res.rows[2].seed, 6);
        assert!((res.grid[1] - 3.0 / 24.0).abs() < 1e-15);
        assert!(res.rows.iter().all(|r| r.wall_ms == 0.0 && r.lambda == 0.0));
        assert!(res.rows[4].r2_planted > 0.12 && res.rows[4].r2_planted < 0.13);
    }

    #[test]
    fn thread_count_does_not_change_rows() {
        let cfg = config(vec![0.0, 10.0]);
        let opts = RunOptions { timing: false, strict_rounds: false };
        let a = crate::harness::with_threads(Some(1), || run_grid(&cfg, opts)).unwrap().unwrap();
        let b = crate::harness::with_threads(Some(3), || run_grid(&cfg, opts)).unwrap().unwrap();
        assert_eq!(a.rows, b.rows);
    }

    #[test]
    fn crossover_interpolation() {
        let x = [0.0, 1.0, 10.0, 100.0];
        let fa = [1.0, 2.0, 3.0, 30.0];
        let pl = [5.0, 5.0, 5.0, 5.0];
        let (at, lo, hi) = find_crossover(&x, &fa, &pl).unwrap();
        assert_eq!((lo, hi), (10.0, 100.0));
        // gap -2 -> 25, fraction 2/27 of a decade
        assert!((at - 10f64.powf(1.0 + 2.0 / 27.0)).abs() < 1e-9);
        let (at, lo, _) = find_crossover(&[0.0, 2.0], &[0.0, 4.0], &[1.0, 1.0]).unwrap();
        assert_eq!(lo, 0.0);
        assert!((at - 0.5).abs() < 1e-12);
        assert!(find_crossover(&x, &pl, &fa).is_none());
    }
}
