//! `sesem` command-line harness: generate synthetic channel observations,
//! solve Manning estimation instances, and run the study tables.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sesem::experiment::{
    self, desk_inner_budget, median, run_nr1, run_nr2, run_nr3, run_nr4, run_replicates, threads_from_env, unix_now,
    write_nr3_traces, write_trace_csv, InstanceEcho, RunRecord, NR1_HEADER, NR4_HEADER, VARIANT_HEADER,
};
use sesem::sven::{write_truth, ChannelSpec, Instance, ObservationSet, DEFAULT_FUTURE_STRIDE};
use sesem::{Error, ReductionKind, SolverConfig, Termination};

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_BUDGET: u8 = 3;

#[derive(Parser)]
#[command(name = "sesem", version, about = "Derivative-free least squares on Saint-Venant Manning estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the channel with a random true Manning field and write a masked observation set.
    Generate {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Fit the Manning field to an observation set.
    Solve {
        /// Observation file; when absent the instance is generated from the instance flags.
        #[arg(long)]
        obs: Option<PathBuf>,
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run one of the study tables and write CSV files.
    Experiment {
        name: ExperimentName,
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Observation windows (time steps) for nr1.
        #[arg(long, value_delimiter = ',', default_value = "2,10,60,120")]
        nts: Vec<usize>,
        /// Tolerances for nr1.
        #[arg(long, value_delimiter = ',', default_value = "1e-8,1e-9,1e-10,1e-11")]
        epsilons: Vec<f64>,
        /// Time steps between future snapshots in the prediction error.
        #[arg(long, default_value_t = DEFAULT_FUTURE_STRIDE)]
        future_stride: usize,
        /// Largest channel size in the nr4 sweep.
        #[arg(long, default_value_t = 700)]
        max_nx: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentName {
    Nr1,
    Nr2,
    Nr3,
    Nr4,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReductionArg {
    Affine,
    Spline,
}

impl From<ReductionArg> for ReductionKind {
    fn from(r: ReductionArg) -> Self {
        match r {
            ReductionArg::Affine => ReductionKind::Affine,
            ReductionArg::Spline => ReductionKind::Spline,
        }
    }
}

#[derive(Args)]
struct InstanceArgs {
    /// Grid intervals; the grid has nx + 1 points.
    #[arg(long, default_value_t = 100)]
    nx: usize,
    /// Observed time steps.
    #[arg(long, default_value_t = 10)]
    nt: usize,
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    #[arg(long, default_value_t = 6.0)]
    dx: f64,
    /// Probability that each (time, point, observable) triple is observed.
    #[arg(long, default_value_t = 0.1)]
    fraction: f64,
    /// Base seed: instance draws and replicate seeds derive from it.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct SolverArgs {
    /// Relative stopping tolerance on the sum of squares.
    #[arg(long, default_value_t = 1e-9)]
    epsilon: f64,
    #[arg(long, value_enum, default_value = "affine")]
    reduction: ReductionArg,
    /// Reduced dimension (default 4 for affine, 20 for spline).
    #[arg(long)]
    nred: Option<usize>,
    /// Inner evaluations per reduction call (default 5·nred affine, 20·nred spline).
    #[arg(long)]
    inner_budget: Option<usize>,
    /// Secant memory length.
    #[arg(long, default_value_t = 1000)]
    memory: usize,
    #[arg(long, overrides_with = "no_accel")]
    accel: bool,
    #[arg(long = "no-accel", overrides_with = "accel")]
    no_accel: bool,
    #[arg(long, default_value_t = 10)]
    replicates: usize,
    #[arg(long, default_value_t = 1_000_000)]
    budget_fevals: usize,
    #[arg(long, default_value_t = 100_000)]
    max_iters: usize,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(m) => CliError::Usage(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

impl InstanceArgs {
    fn spec(&self) -> CliResult<ChannelSpec> {
        if self.nx < 2 {
            return Err(CliError::Usage(format!("--nx must be at least 2, got {}", self.nx)));
        }
        if self.nt == 0 {
            return Err(CliError::Usage("--nt must be at least 1".into()));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(CliError::Usage(format!("--fraction must lie in (0, 1], got {}", self.fraction)));
        }
        let spec = ChannelSpec {
            n_x: self.nx,
            dt: self.dt,
            dx: self.dx,
            ..ChannelSpec::default()
        };
        spec.validate()?;
        Ok(spec)
    }

    fn generate(&self) -> CliResult<Instance> {
        Ok(Instance::generate(self.spec()?, self.nt, self.fraction, self.seed)?)
    }
}

impl SolverArgs {
    fn config(&self, seed: u64) -> CliResult<SolverConfig> {
        let reduction: ReductionKind = self.reduction.into();
        let n_red = self.nred.unwrap_or(match reduction {
            ReductionKind::Spline => 20,
            _ => 4,
        });
        if n_red == 0 {
            return Err(CliError::Usage("--nred must be positive".into()));
        }
        if reduction == ReductionKind::Spline && !n_red.is_multiple_of(2) {
            return Err(CliError::Usage(format!("spline --nred must be even, got {n_red}")));
        }
        if !(self.epsilon > 0.0) {
            return Err(CliError::Usage("--epsilon must be positive".into()));
        }
        if self.replicates == 0 {
            return Err(CliError::Usage("--replicates must be positive".into()));
        }
        let config = SolverConfig {
            reduction,
            n_red,
            subsolver_budget: Some(self.inner_budget.unwrap_or(desk_inner_budget(reduction, n_red))),
            memory_p: self.memory,
            accelerate: !self.no_accel,
            max_fevals: self.budget_fevals,
            max_outer_iters: self.max_iters,
            seed,
            ..SolverConfig::default()
        };
        config.validate()?;
        Ok(config)
    }
}

fn create_out(out: &Path) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.display())))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> sesem::Result<()>) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_lines(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> CliResult<()> {
    write_file(path, |w| {
        writeln!(w, "{header}")?;
        for r in rows {
            writeln!(w, "{r}")?;
        }
        Ok(())
    })
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let s = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{s}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

#[derive(Serialize)]
struct GenerateReport<'a> {
    schema_version: u32,
    n_x: usize,
    n_t: usize,
    n_o: usize,
    full_size: usize,
    sum_sq: f64,
    observations: &'a Path,
    truth: &'a Path,
}

fn cmd_generate(instance: &InstanceArgs, out: &Path) -> CliResult<u8> {
    let inst = instance.generate()?;
    create_out(out)?;
    let obs_path = out.join("observations.txt");
    let truth_path = out.join("truth.txt");
    write_file(&obs_path, |w| inst.obs.write_to(w))?;
    write_file(&truth_path, |w| write_truth(&inst.truth, w))?;
    print_json(&GenerateReport {
        schema_version: experiment::SCHEMA_VERSION,
        n_x: inst.obs.n_x,
        n_t: inst.obs.n_t,
        n_o: inst.obs.len(),
        full_size: inst.obs.full_size(),
        sum_sq: inst.obs.sum_sq(),
        observations: &obs_path,
        truth: &truth_path,
    })?;
    Ok(0)
}

fn cmd_solve(obs: Option<&Path>, instance: &InstanceArgs, solver: &SolverArgs, out: &Path) -> CliResult<u8> {
    let (obs, spec) = match obs {
        Some(path) => {
            let file = File::open(path).map_err(|e| CliError::Runtime(format!("cannot open {}: {e}", path.display())))?;
            let obs = ObservationSet::read_from(BufReader::new(file))?;
            let spec = ChannelSpec {
                n_x: obs.n_x,
                dt: obs.dt,
                dx: obs.dx,
                ..ChannelSpec::default()
            };
            spec.validate()?;
            (obs, spec)
        }
        None => {
            let inst = instance.generate()?;
            (inst.obs, inst.spec)
        }
    };
    let mut config = solver.config(instance.seed)?;
    config.ssq_target = sesem::sven::ssq_target(&obs, solver.epsilon)?;
    create_out(out)?;

    let started = unix_now();
    let reps = run_replicates(&obs, &spec, &config, solver.replicates, threads_from_env())?;
    for r in &reps {
        write_file(&out.join(format!("trace_{}.csv", r.row.replicate)), |w| write_trace_csv(&r.result, w))?;
    }
    let rows = reps.iter().map(|r| r.row.clone()).collect();
    let record = RunRecord::new(InstanceEcho::new(&obs, solver.epsilon), config, rows, started);
    print_json(&record)?;

    let budget_hit = record
        .replicates
        .iter()
        .any(|r| matches!(r.termination, Termination::FevalBudget | Termination::IterBudget));
    Ok(if record.replicates.iter().all(|r| r.reached_target) {
        0
    } else if budget_hit {
        EXIT_BUDGET
    } else {
        EXIT_RUNTIME
    })
}

#[derive(Serialize)]
struct ExperimentReport {
    schema_version: u32,
    experiment: &'static str,
    files: Vec<PathBuf>,
    started_unix: f64,
    finished_unix: f64,
}

#[allow(clippy::too_many_arguments)]
fn cmd_experiment(
    name: ExperimentName,
    instance: &InstanceArgs,
    solver: &SolverArgs,
    nts: &[usize],
    epsilons: &[f64],
    future_stride: usize,
    max_nx: usize,
    out: &Path,
) -> CliResult<u8> {
    let config = solver.config(instance.seed)?;
    let threads = threads_from_env();
    create_out(out)?;
    let started = unix_now();
    let mut files = Vec::new();
    let label = match name {
        ExperimentName::Nr1 => {
            if epsilons.iter().any(|e| !(*e > 0.0)) || nts.contains(&0) {
                return Err(CliError::Usage("--nts and --epsilons must be positive".into()));
            }
            let cells = run_nr1(&instance.spec()?, nts, epsilons, instance.fraction, instance.seed, &config, future_stride)?;
            let path = out.join("nr1.csv");
            write_lines(&path, NR1_HEADER, cells.iter().map(|c| c.csv_row()))?;
            files.push(path);
            "nr1"
        }
        ExperimentName::Nr2 => {
            let inst = instance.generate()?;
            let base = SolverConfig {
                ssq_target: inst.ssq_target(solver.epsilon)?,
                ..config
            };
            let settings: Vec<_> = [2, 4, 8, 16]
                .map(|n| (ReductionKind::Affine, n))
                .into_iter()
                .chain([4, 10, 20, 30].map(|n| (ReductionKind::Spline, n)))
                .filter(|&(k, n)| k != ReductionKind::Affine || n <= inst.spec.n_points())
                .collect();
            let runs = run_nr2(&inst, &base, &settings, solver.replicates, threads)?;
            let path = out.join("nr2.csv");
            write_lines(&path, VARIANT_HEADER, runs.iter().flat_map(|v| v.csv_rows()))?;
            files.push(path);
            "nr2"
        }
        ExperimentName::Nr3 => {
            let inst = instance.generate()?;
            let base = SolverConfig {
                ssq_target: inst.ssq_target(solver.epsilon)?,
                ..config
            };
            // The accelerated runs fix the cap for the plain runs at ten times their median.
            let (with, _) = run_nr3(&inst, &base, solver.replicates, threads, 1)?;
            let iters: Vec<f64> = with.runs.iter().map(|r| r.row.outer_iters as f64).collect();
            let cap = ((10.0 * median(&iters)).ceil() as usize).max(10);
            let (_, without) = run_nr3(&inst, &base, solver.replicates, threads, cap)?;
            let summary = out.join("nr3.csv");
            write_lines(&summary, VARIANT_HEADER, with.csv_rows().into_iter().chain(without.csv_rows()))?;
            let traces = out.join("nr3_traces.csv");
            write_file(&traces, |w| write_nr3_traces(&[&with, &without], w))?;
            files.extend([summary, traces]);
            "nr3"
        }
        ExperimentName::Nr4 => {
            let n_xs: Vec<usize> = (500..=max_nx.max(500)).step_by(100).filter(|&n| n <= max_nx).collect();
            if n_xs.is_empty() {
                return Err(CliError::Usage("--max-nx must be at least 500".into()));
            }
            let settings = [(ReductionKind::Affine, 4), (ReductionKind::Spline, 20)];
            let rows = run_nr4(
                &n_xs,
                instance.nt,
                instance.fraction,
                solver.epsilon,
                instance.seed,
                &config,
                &settings,
                solver.replicates,
                threads,
            )?;
            let path = out.join("nr4.csv");
            write_lines(&path, NR4_HEADER, rows.iter().map(|r| r.csv_row()))?;
            files.push(path);
            "nr4"
        }
    };
    print_json(&ExperimentReport {
        schema_version: experiment::SCHEMA_VERSION,
        experiment: label,
        files,
        started_unix: started,
        finished_unix: unix_now(),
    })?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Generate { instance, out } => cmd_generate(instance, out),
        Command::Solve {
            obs,
            instance,
            solver,
            out,
        } => cmd_solve(obs.as_deref(), instance, solver, out),
        Command::Experiment {
            name,
            instance,
            solver,
            nts,
            epsilons,
            future_stride,
            max_nx,
            out,
        } => cmd_experiment(*name, instance, solver, nts, epsilons, *future_stride, *max_nx, out),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
