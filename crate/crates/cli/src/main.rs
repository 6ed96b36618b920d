use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pfedlab::harness::{
    self, run_convergence_diagnostics, run_grid, run_on_instance, run_phase_transition_sweep,
    run_scaling_experiment, run_stability_experiment, write_diagnostics_csv, write_results, AlgorithmKind,
    DiagnosticsConfig, ExperimentConfig, OutputFormat, RunOptions, SeedSpec, SweepAxis,
};
use pfedlab::instance::{generate_instance, read_instance, write_instance};
use pfedlab::Error;

#[derive(Parser)]
#[command(name = "pfedlab", version, about = "Personalized federated learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one instance and write it in the instance text format.
    Generate(Common),
    /// Run the configured algorithms on one instance per seed.
    Run(Common),
    /// Run the configured sweep (phase transition or scaling).
    Sweep(Common),
    /// Compare measured convergence with the theoretical bounds.
    Diagnose(Common),
    /// Estimate stability over a grid of client sizes.
    Stability(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Use this single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads; all cores by default.
    #[arg(long)]
    threads: Option<usize>,
    /// Write zero in the wall_ms column so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
    /// Fail SoftFedAvg runs whose round counts are below the requirements.
    #[arg(long)]
    strict_rounds: bool,
    /// For `run`: read the instance from this file instead of generating it.
    #[arg(long)]
    instance: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> pfedlab::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::from_path(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seeds = SeedSpec::List(vec![s]);
        }
        if let Some(f) = self.format {
            cfg.format = match f {
                Format::Csv => OutputFormat::Csv,
                Format::Json => OutputFormat::Json,
            };
        }
        if let Some(out) = &self.out {
            cfg.output = Some(out.display().to_string());
        }
        Ok(cfg)
    }

    fn options(&self) -> RunOptions {
        RunOptions { timing: !self.no_timing, strict_rounds: self.strict_rounds }
    }
}

fn open_output(path: Option<&str>) -> pfedlab::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(Path::new(p))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn print_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn generate(args: &Common) -> pfedlab::Result<()> {
    let cfg = args.load()?;
    let seed = cfg.seeds.seeds()[0];
    let (inst, data) = generate_instance(&cfg.instance, seed)?;
    let mut out = open_output(cfg.output.as_deref())?;
    write_instance(&mut out, &inst, &data)?;
    out.flush()?;
    Ok(())
}

fn run(args: &Common) -> pfedlab::Result<()> {
    let cfg = args.load()?;
    if cfg.algorithms.is_empty() {
        return Err(Error::Config("no algorithms configured".into()));
    }
    let opts = args.options();
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    match &args.instance {
        Some(path) => {
            let (inst, data) = read_instance(BufReader::new(File::open(path)?))?;
            for seed in cfg.seeds.seeds() {
                let (r, w) = run_on_instance(&cfg, &inst, &data, cfg.instance.mode, seed, opts)?;
                rows.extend(r);
                warnings.extend(w);
            }
        }
        None => {
            let single = ExperimentConfig { sweep: None, ..cfg.clone() };
            let res = harness::with_threads(args.threads, || run_grid(&single, opts))??;
            rows = res.rows;
            warnings = res.warnings;
        }
    }
    print_warnings(&warnings);
    let mut out = open_output(cfg.output.as_deref())?;
    write_results(&rows, &mut out, cfg.format)?;
    out.flush()?;
    Ok(())
}

fn sweep(args: &Common) -> pfedlab::Result<()> {
    let cfg = args.load()?;
    let axis = cfg.sweep.as_ref().ok_or_else(|| Error::Config("missing [sweep] section".into()))?.axis;
    let opts = args.options();
    let has = |k| cfg.algorithms.iter().any(|a| a.algorithm == k);
    let res = harness::with_threads(args.threads, || -> pfedlab::Result<_> {
        if axis == SweepAxis::R2 && has(AlgorithmKind::FedAvg) && has(AlgorithmKind::Plt) {
            let res = run_phase_transition_sweep(&cfg, opts)?;
            match &res.crossover {
                Some(c) => eprintln!(
                    "crossover: R2 = {:.4e} ({:.3} m/N), between {:.4e} and {:.4e}",
                    c.r2, c.relative, c.lower, c.upper
                ),
                None => eprintln!("crossover: none on this grid"),
            }
            Ok(res)
        } else if axis == SweepAxis::R2 {
            run_grid(&cfg, opts)
        } else {
            let rep = run_scaling_experiment(&cfg, opts)?;
            for c in &rep.curves {
                eprintln!(
                    "{}: slope {:.3} (se {:.3}), upper-half slope {:.3}",
                    c.algorithm, c.slope, c.slope_stderr, c.tail_slope
                );
            }
            Ok(rep.result)
        }
    })??;
    print_warnings(&res.warnings);
    let mut out = open_output(cfg.output.as_deref())?;
    write_results(&res.rows, &mut out, cfg.format)?;
    out.flush()?;
    Ok(())
}

fn diagnose(args: &Common) -> pfedlab::Result<()> {
    let cfg = args.load()?;
    let diag = cfg.diagnostics.clone().unwrap_or_else(DiagnosticsConfig::default);
    let seeds = cfg.seeds.seeds();
    let rows = harness::with_threads(args.threads, || run_convergence_diagnostics(&diag, &seeds))??;
    let failed = rows.iter().filter(|r| !r.bound_satisfied).count();
    eprintln!("{} rows, {failed} above their bound", rows.len());
    let mut out = open_output(cfg.output.as_deref())?;
    match cfg.format {
        OutputFormat::Csv => write_diagnostics_csv(&rows, &mut out)?,
        OutputFormat::Json => {
            serde_json_line(&mut out, &rows)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn stability(args: &Common) -> pfedlab::Result<()> {
    let cfg = args.load()?;
    let opts = args.options();
    let table = harness::with_threads(args.threads, || run_stability_experiment(&cfg, opts))??;
    eprintln!("slope {:.3} (se {:.3})", table.slope, table.slope_stderr);
    let mut out = open_output(cfg.output.as_deref())?;
    match cfg.format {
        OutputFormat::Csv => table.write_csv(&mut out)?,
        OutputFormat::Json => serde_json_line(&mut out, &table)?,
    }
    out.flush()?;
    Ok(())
}

fn serde_json_line<T: serde::Serialize>(out: &mut dyn Write, value: &T) -> pfedlab::Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidInput(_) | Error::Parse { .. } => 2,
        Error::InfeasibleHeterogeneity(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Diagnose(a) => diagnose(a),
        Command::Stability(a) => stability(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
