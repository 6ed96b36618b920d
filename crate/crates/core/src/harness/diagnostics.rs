use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DiagnosticsConfig, ExperimentConfig};
use super::runner::{run_algorithm, RunOptions};
use super::stats;
use crate::algorithms::{
    soft_fed_avg, soft_fed_avg_traced, soft_sharing_oracle_quadratic, AlgorithmConfig, Solver, StepRule,
    TraceOracle,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    federated_stability_estimate, inner_loop_bound, optimization_error, optimization_error_bound,
    outer_loop_bound,
};
use crate::instance::{generate_instance, Family, FederatedDataset, InstanceSpec};
use crate::linalg::dist2;
use crate::optim::{prox_local, prox_quadratic_closed_form};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    /// Squared distance of the k-th local iterate to the prox.
    Inner,
    /// Squared distance of the round-t global model to the oracle.
    Outer,
    /// Objective gap after `T` rounds and `K_T` final steps.
    OptError,
}

/// A measured mean next to its theoretical bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub kind: DiagnosticKind,
    /// `k` for inner rows, `t` or `T` otherwise.
    pub step: usize,
    /// `K_T` for optimization-error rows, zero otherwise.
    pub final_steps: usize,
    pub mean: f64,
    pub stderr: f64,
    pub bound: f64,
    pub bound_satisfied: bool,
    pub seeds: usize,
}

impl DiagnosticRow {
    fn new(kind: DiagnosticKind, step: usize, final_steps: usize, values: &[f64], bound: f64) -> Self {
        let mean = stats::mean(values);
        DiagnosticRow {
            kind,
            step,
            final_steps,
            mean,
            stderr: stats::stderr(values),
            bound,
            bound_satisfied: mean <= bound,
            seeds: values.len(),
        }
    }
}

pub fn write_diagnostics_csv<W: Write>(rows: &[DiagnosticRow], w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

struct SeedMeasurements {
    inner: Vec<f64>,
    outer: Vec<f64>,
    opt: Vec<f64>,
    bounds: (Vec<f64>, Vec<f64>, Vec<f64>),
}

fn measure(cfg: &DiagnosticsConfig, seed: u64) -> Result<SeedMeasurements> {
    let spec = InstanceSpec::balanced(Family::Quadratic { rho: cfg.rho }, cfg.m, cfg.n, cfg.d, cfg.target_r2);
    let (instance, data) = generate_instance(&spec, seed)?;
    let model = &instance.loss;
    let c = &model.constants;
    let mu = c.mu;
    let lambda = cfg.lambda;
    let p = data.weights();
    let domain = &model.domain;
    let batch = cfg.local_batch.for_client(cfg.n);

    let g = instance.average_global_model();
    let client = data.client(0);
    let target = prox_quadratic_closed_form(client, &g, lambda, domain)?;
    let mut inner = Vec::with_capacity(cfg.inner_steps.len());
    for &k in &cfg.inner_steps {
        let mut rng = stream(seed, Purpose::LocalSgd, 0, k as u64);
        let w = prox_local(model, client, domain, &g, lambda, k, batch, &mut rng, domain.center())?;
        inner.push(dist2(&w, &target));
    }

    let (og, ol) = soft_sharing_oracle_quadratic(&data, lambda, p, domain)?;
    let base = AlgorithmConfig {
        lambda,
        local_steps: StepRule::OuterBound,
        local_batch: cfg.local_batch,
        ..AlgorithmConfig::default()
    };
    let t_max = cfg.outer_rounds.iter().copied().max().unwrap_or(0);
    let mut outer = Vec::with_capacity(cfg.outer_rounds.len());
    if t_max > 0 {
        let traced_cfg = AlgorithmConfig { rounds: t_max, final_steps: 1, ..base.clone() };
        let oracle = TraceOracle { global: og.clone(), locals: ol.clone() };
        let out = soft_fed_avg_traced(model, &data, &traced_cfg, seed, &oracle)?;
        for &t in &cfg.outer_rounds {
            let rec = out
                .trace
                .iter()
                .find(|r| r.round == t)
                .ok_or_else(|| Error::Config(format!("round {t} missing from the trace")))?;
            outer.push(rec.global_dist2.unwrap_or(f64::NAN));
        }
    }
    let mut opt = Vec::with_capacity(cfg.opt_points.len());
    for &(t, k) in &cfg.opt_points {
        let run_cfg = AlgorithmConfig { rounds: t, final_steps: k, ..base.clone() };
        let out = soft_fed_avg(model, &data, &run_cfg, seed)?;
        opt.push(optimization_error(model, &data, &out, lambda, p, (&og, &ol))?);
    }
    let bounds = (
        cfg.inner_steps.iter().map(|&k| inner_loop_bound(c, mu, k)).collect(),
        cfg.outer_rounds.iter().map(|&t| outer_loop_bound(c, mu, lambda, p, t)).collect(),
        cfg.opt_points.iter().map(|&(t, k)| optimization_error_bound(c, mu, lambda, p, t, k)).collect(),
    );
    Ok(SeedMeasurements { inner, outer, opt, bounds })
}

/// Inner-loop, outer-loop and optimization-error measurements on quadratic
/// instances, averaged over `seeds`, next to their bounds.
///
/// The inner rows run the local prox solver on client 0 with the average
/// global model as anchor. The outer rows trace one SoftFedAvg run per seed
/// with the local step rule that the outer bound assumes.
///
/// Bounds depend on the domain, which is fitted per seed; each row reports
/// the smallest bound over seeds.
pub fn run_convergence_diagnostics(cfg: &DiagnosticsConfig, seeds: &[u64]) -> Result<Vec<DiagnosticRow>> {
    if seeds.is_empty() {
        return Err(Error::Config("the seed list is empty".into()));
    }
    if cfg.inner_steps.contains(&0) || cfg.opt_points.iter().any(|&(t, k)| t == 0 || k == 0) {
        return Err(Error::Config("step counts must be positive".into()));
    }
    let per_seed = seeds.par_iter().map(|&s| measure(cfg, s)).collect::<Result<Vec<_>>>()?;
    let column = |f: &dyn Fn(&SeedMeasurements) -> &Vec<f64>, j: usize| -> Vec<f64> {
        per_seed.iter().map(|s| f(s)[j]).collect()
    };
    let min_of = |v: Vec<f64>| v.into_iter().fold(f64::INFINITY, f64::min);
    let mut rows = Vec::new();
    for (j, &k) in cfg.inner_steps.iter().enumerate() {
        let bound = min_of(column(&|s| &s.bounds.0, j));
        rows.push(DiagnosticRow::new(DiagnosticKind::Inner, k, 0, &column(&|s| &s.inner, j), bound));
    }
    for (j, &t) in cfg.outer_rounds.iter().enumerate() {
        let bound = min_of(column(&|s| &s.bounds.1, j));
        rows.push(DiagnosticRow::new(DiagnosticKind::Outer, t, 0, &column(&|s| &s.outer, j), bound));
    }
    for (j, &(t, k)) in cfg.opt_points.iter().enumerate() {
        let bound = min_of(column(&|s| &s.bounds.2, j));
        rows.push(DiagnosticRow::new(DiagnosticKind::OptError, t, k, &column(&|s| &s.opt, j), bound));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub n: usize,
    pub seed: u64,
    pub client: usize,
    pub gamma: f64,
    pub trials: usize,
    pub probe_points: usize,
}

/// Per-seed stability estimates over a grid of client sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityTable {
    pub rows: Vec<StabilityRow>,
    pub n_values: Vec<usize>,
    pub mean_gamma: Vec<f64>,
    /// Log-log slope of mean gamma against `n`.
    pub slope: f64,
    pub slope_stderr: f64,
    pub retrain_mode: String,
}

impl StabilityTable {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// For each `n` in the stability grid, gives every client `n` records and
/// estimates the stability of the configured algorithm for one client.
pub fn run_stability_experiment(config: &ExperimentConfig, opts: RunOptions) -> Result<StabilityTable> {
    let st = config.stability.as_ref().ok_or_else(|| Error::Config("missing [stability] section".into()))?;
    if st.n_values.is_empty() || st.n_values.contains(&0) {
        return Err(Error::Config("the stability grid needs positive sizes".into()));
    }
    let m = config.instance.n.len();
    if st.client >= m {
        return Err(Error::Config(format!("client {} out of range for m = {m}", st.client)));
    }
    let seeds = config.seeds.seeds();
    let tasks: Vec<(usize, u64)> =
        st.n_values.iter().flat_map(|&n| seeds.iter().map(move |&s| (n, s))).collect();
    let rows = tasks
        .par_iter()
        .map(|&(n, seed)| {
            let spec = InstanceSpec { n: vec![n; m], ..config.instance.clone() };
            let (instance, data) = generate_instance(&spec, seed)?;
            let r2 = instance.heterogeneity_r2(spec.mode);
            let trainer = |d: &FederatedDataset, s: u64| {
                run_algorithm(&st.algorithm, &instance, d, r2, s, opts).map(|(out, _)| out)
            };
            let est = federated_stability_estimate(
                &trainer, &instance, &data, st.client, st.trials, st.probes, seed, seed,
            )?;
            Ok(StabilityRow {
                n,
                seed,
                client: st.client,
                gamma: est.gamma,
                trials: est.trials,
                probe_points: est.probe_points,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_gamma: Vec<f64> = st
        .n_values
        .iter()
        .map(|&n| stats::mean(&rows.iter().filter(|r| r.n == n).map(|r| r.gamma).collect::<Vec<_>>()))
        .collect();
    let x: Vec<f64> = st.n_values.iter().map(|&n| n as f64).collect();
    let (slope, slope_stderr) = if x.len() >= 2 && mean_gamma.iter().all(|g| *g > 0.0) {
        stats::log_log_slope(&x, &mean_gamma)
    } else {
        (f64::NAN, f64::NAN)
    };
    let retrain_mode = match st.algorithm.config.solver {
        Solver::Exact => "exact",
        Solver::Sgd => "sgd",
    };
    Ok(StabilityTable {
        rows,
        n_values: st.n_values.clone(),
        mean_gamma,
        slope,
        slope_stderr,
        retrain_mode: retrain_mode.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::LocalBatch;

    #[test]
    fn small_diagnostics_respect_bounds() {
        let cfg = DiagnosticsConfig {
            m: 3,
            n: 10,
            inner_steps: vec![8, 64],
            outer_rounds: vec![4],
            opt_points: vec![(4, 32)],
            local_batch: LocalBatch::Size(3),
            ..Default::default()
        };
        let rows = run_convergence_diagnostics(&cfg, &[1, 2, 3, 4]).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.bound_satisfied && r.seeds == 4), "{rows:?}");
        let mut buf = Vec::new();
        write_diagnostics_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("kind,step,final_steps,mean"));
    }
}
