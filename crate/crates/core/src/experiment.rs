//! Replicated solver runs on synthetic channel instances, and the tables of
//! the numerical study: tolerance/observation grid (nr1), reduced dimension
//! (nr2), acceleration ablation (nr3) and problem size (nr4).

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{ReductionKind, SolveResult, SolverConfig, Termination};
use crate::error::Result;
use crate::framework::solve;
use crate::subsolver::NelderMead;
use crate::sven::{make_problem, prediction_error, ChannelSpec, Instance, ObservationSet, ACCEPTABLE_ETA};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "SESEM_THREADS";

/// Inner evaluation budget per reduction call used by the desk-scale runs.
pub fn desk_inner_budget(kind: ReductionKind, n_red: usize) -> usize {
    match kind {
        ReductionKind::Affine => 5 * n_red,
        ReductionKind::Spline => 20 * n_red,
        ReductionKind::Disabled => 0,
    }
}

/// Worker count from `SESEM_THREADS`, at least 1, default 1.
pub fn threads_from_env() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .unwrap_or(1)
        .max(1)
}

/// Seconds since the Unix epoch.
pub fn unix_now() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub stdev: f64,
}

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_stdev(values: &[f64]) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary {
            mean: f64::NAN,
            stdev: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let stdev = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Summary { mean, stdev }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Summary of one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub seed: u64,
    pub termination: Termination,
    pub reached_target: bool,
    pub outer_iters: usize,
    pub fevals: usize,
    pub ssq_initial: f64,
    pub ssq_best: f64,
    pub ssq_target: f64,
    pub accel_accepts: usize,
    pub accel_rejects: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub replicates: usize,
    pub successes: usize,
    pub seconds: Summary,
    pub outer_iters: Summary,
    pub fevals: Summary,
}

impl Aggregates {
    pub fn from_rows(rows: &[ReplicateRow]) -> Self {
        let col = |f: fn(&ReplicateRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
        Self {
            replicates: rows.len(),
            successes: rows.iter().filter(|r| r.reached_target).count(),
            seconds: mean_stdev(&col(|r| r.seconds)),
            outer_iters: mean_stdev(&col(|r| r.outer_iters as f64)),
            fevals: mean_stdev(&col(|r| r.fevals as f64)),
        }
    }
}

/// Instance parameters echoed into run records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceEcho {
    pub n_x: usize,
    pub n_t: usize,
    pub n_o: usize,
    pub dt: f64,
    pub dx: f64,
    pub obs_seed: u64,
    pub sum_sq: f64,
    pub epsilon: f64,
}

impl InstanceEcho {
    pub fn new(obs: &ObservationSet, epsilon: f64) -> Self {
        Self {
            n_x: obs.n_x,
            n_t: obs.n_t,
            n_o: obs.len(),
            dt: obs.dt,
            dx: obs.dx,
            obs_seed: obs.seed,
            sum_sq: obs.sum_sq(),
            epsilon,
        }
    }
}

/// Everything a `solve` invocation reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub instance: InstanceEcho,
    pub config: SolverConfig,
    pub replicates: Vec<ReplicateRow>,
    pub aggregates: Aggregates,
    pub started_unix: f64,
    pub finished_unix: f64,
}

impl RunRecord {
    pub fn new(instance: InstanceEcho, config: SolverConfig, rows: Vec<ReplicateRow>, started_unix: f64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            instance,
            config,
            aggregates: Aggregates::from_rows(&rows),
            replicates: rows,
            started_unix,
            finished_unix: unix_now(),
        }
    }
}

/// One finished replicate with its full result.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub row: ReplicateRow,
    pub result: SolveResult,
}

/// Solves one replicate from `x⁰ = 0` with the configured seed.
pub fn run_one(obs: &ObservationSet, spec: &ChannelSpec, config: &SolverConfig, replicate: usize) -> Result<Replicate> {
    let mut problem = make_problem(obs.clone(), spec.clone())?;
    let x0 = vec![0.0; problem.n()];
    let t = Instant::now();
    let result = solve(&mut problem, &x0, config, &NelderMead::default())?;
    let seconds = t.elapsed().as_secs_f64();
    let row = ReplicateRow {
        replicate,
        seed: config.seed,
        termination: result.termination,
        reached_target: result.reached_target(),
        outer_iters: result.outer_iters,
        fevals: result.fevals,
        ssq_initial: 2.0 * result.f_initial,
        ssq_best: result.ssq_best,
        ssq_target: config.ssq_target,
        accel_accepts: result.accel_accepts,
        accel_rejects: result.accel_rejects,
        seconds,
    };
    Ok(Replicate { row, result })
}

/// Runs `replicates` solves with seeds `base.seed + r` on up to `threads`
/// workers. Results come back in replicate order regardless of scheduling.
pub fn run_replicates(
    obs: &ObservationSet,
    spec: &ChannelSpec,
    base: &SolverConfig,
    replicates: usize,
    threads: usize,
) -> Result<Vec<Replicate>> {
    base.validate()?;
    let slots: Vec<Mutex<Option<Result<Replicate>>>> = (0..replicates).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let r = next.fetch_add(1, Ordering::Relaxed);
        if r >= replicates {
            break;
        }
        let config = SolverConfig {
            seed: base.seed.wrapping_add(r as u64),
            ..base.clone()
        };
        let out = run_one(obs, spec, &config, r);
        *slots[r].lock().unwrap() = Some(out);
    };
    let workers = threads.clamp(1, replicates.max(1));
    if workers == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(work);
            }
        });
    }
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every replicate ran"))
        .collect()
}

pub const TRACE_HEADER: &str = "k,f,ssq,alpha,step_kind,accel_used,fevals_cum";

/// Per-iteration trace, one row per completed outer iteration.
pub fn write_trace_csv<W: Write>(result: &SolveResult, mut w: W) -> Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for e in &result.trace {
        writeln!(
            w,
            "{},{:.16e},{:.16e},{:e},{},{},{}",
            e.k,
            e.f,
            2.0 * e.f,
            e.alpha,
            e.step_kind,
            e.accel_used,
            e.fevals_cum
        )?;
    }
    Ok(())
}

/// One cell of the tolerance/observation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nr1Cell {
    pub n_x: usize,
    pub n_t: usize,
    pub n_o: usize,
    /// Observed fraction of the prediction horizon.
    pub nu: f64,
    pub epsilon: f64,
    pub reached_target: bool,
    pub outer_iters: usize,
    pub fevals: usize,
    pub eta: f64,
    pub acceptable: bool,
}

pub const NR1_HEADER: &str = "n_x,n_t,n_o,nu,epsilon,reached_target,outer_iters,fevals,eta,acceptable";

impl Nr1Cell {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:e},{:e},{},{},{},{:e},{}",
            self.n_x,
            self.n_t,
            self.n_o,
            self.nu,
            self.epsilon,
            self.reached_target,
            self.outer_iters,
            self.fevals,
            self.eta,
            self.acceptable
        )
    }
}

/// For every observation window `n_t` and tolerance `ε`, fits the Manning
/// field and measures its prediction error up to the prediction horizon.
pub fn run_nr1(
    spec: &ChannelSpec,
    n_ts: &[usize],
    epsilons: &[f64],
    fraction: f64,
    obs_seed: u64,
    base: &SolverConfig,
    future_stride: usize,
) -> Result<Vec<Nr1Cell>> {
    let mut cells = Vec::new();
    for &n_t in n_ts {
        let inst = Instance::generate(spec.clone(), n_t, fraction, obs_seed)?;
        let future = inst.future_observations(future_stride)?;
        for &epsilon in epsilons {
            let config = SolverConfig {
                ssq_target: inst.ssq_target(epsilon)?,
                ..base.clone()
            };
            let rep = run_one(&inst.obs, &inst.spec, &config, 0)?;
            let eta = prediction_error(&rep.result.x_best, &inst.obs, &future, &inst.spec);
            cells.push(Nr1Cell {
                n_x: spec.n_x,
                n_t,
                n_o: inst.obs.len(),
                nu: spec.t(n_t) / crate::sven::PREDICTION_HORIZON,
                epsilon,
                reached_target: rep.row.reached_target,
                outer_iters: rep.row.outer_iters,
                fevals: rep.row.fevals,
                eta,
                acceptable: eta <= ACCEPTABLE_ETA,
            });
        }
    }
    Ok(cells)
}

/// Replicates for one reduction setting.
#[derive(Debug, Clone)]
pub struct VariantRuns {
    pub reduction: ReductionKind,
    pub n_red: usize,
    pub accelerate: bool,
    pub runs: Vec<Replicate>,
}

pub const VARIANT_HEADER: &str =
    "reduction,n_red,accelerate,replicate,seed,termination,reached_target,outer_iters,fevals,ssq_best,accel_accepts,seconds";

impl VariantRuns {
    pub fn csv_rows(&self) -> Vec<String> {
        self.runs
            .iter()
            .map(|r| {
                let w = &r.row;
                format!(
                    "{},{},{},{},{},{},{},{},{},{:e},{},{:.6}",
                    self.reduction,
                    self.n_red,
                    self.accelerate,
                    w.replicate,
                    w.seed,
                    w.termination,
                    w.reached_target,
                    w.outer_iters,
                    w.fevals,
                    w.ssq_best,
                    w.accel_accepts,
                    w.seconds
                )
            })
            .collect()
    }

    pub fn rows(&self) -> Vec<ReplicateRow> {
        self.runs.iter().map(|r| r.row.clone()).collect()
    }
}

fn variant_config(base: &SolverConfig, reduction: ReductionKind, n_red: usize) -> SolverConfig {
    SolverConfig {
        reduction,
        n_red,
        subsolver_budget: Some(desk_inner_budget(reduction, n_red)),
        ..base.clone()
    }
}

/// Replicated runs over a list of `(reduction, n_red)` settings.
pub fn run_nr2(
    inst: &Instance,
    base: &SolverConfig,
    settings: &[(ReductionKind, usize)],
    replicates: usize,
    threads: usize,
) -> Result<Vec<VariantRuns>> {
    settings
        .iter()
        .map(|&(reduction, n_red)| {
            let config = variant_config(base, reduction, n_red);
            Ok(VariantRuns {
                reduction,
                n_red,
                accelerate: config.accelerate,
                runs: run_replicates(&inst.obs, &inst.spec, &config, replicates, threads)?,
            })
        })
        .collect()
}

/// Identical seeds with and without acceleration. Runs without acceleration
/// stop after `noaccel_max_iters` outer iterations.
pub fn run_nr3(
    inst: &Instance,
    base: &SolverConfig,
    replicates: usize,
    threads: usize,
    noaccel_max_iters: usize,
) -> Result<(VariantRuns, VariantRuns)> {
    let with = SolverConfig {
        accelerate: true,
        ..base.clone()
    };
    let without = SolverConfig {
        accelerate: false,
        max_outer_iters: noaccel_max_iters,
        ..base.clone()
    };
    let run = |c: &SolverConfig| -> Result<VariantRuns> {
        Ok(VariantRuns {
            reduction: c.reduction,
            n_red: c.n_red,
            accelerate: c.accelerate,
            runs: run_replicates(&inst.obs, &inst.spec, c, replicates, threads)?,
        })
    };
    Ok((run(&with)?, run(&without)?))
}

pub const NR3_TRACE_HEADER: &str = "accelerate,replicate,k,f,ssq,alpha,step_kind,accel_used,fevals_cum";

pub fn write_nr3_traces<W: Write>(variants: &[&VariantRuns], mut w: W) -> Result<()> {
    writeln!(w, "{NR3_TRACE_HEADER}")?;
    for v in variants {
        for r in &v.runs {
            for e in &r.result.trace {
                writeln!(
                    w,
                    "{},{},{},{:.16e},{:.16e},{:e},{},{},{}",
                    v.accelerate,
                    r.row.replicate,
                    e.k,
                    e.f,
                    2.0 * e.f,
                    e.alpha,
                    e.step_kind,
                    e.accel_used,
                    e.fevals_cum
                )?;
            }
        }
    }
    Ok(())
}

/// One size of the problem-size sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nr4Row {
    pub n_x: usize,
    pub n_o: usize,
    pub reduction: ReductionKind,
    pub n_red: usize,
    pub ssq_target: f64,
    pub ssq_best_mean: f64,
    pub aggregates: Aggregates,
}

pub const NR4_HEADER: &str =
    "n_x,n_o,reduction,n_red,ssq_target,ssq_best_mean,successes,replicates,iters_mean,iters_stdev,fevals_mean,fevals_stdev,seconds_mean,seconds_stdev";

impl Nr4Row {
    pub fn csv_row(&self) -> String {
        let a = &self.aggregates;
        format!(
            "{},{},{},{},{:e},{:e},{},{},{},{},{},{},{:.6},{:.6}",
            self.n_x,
            self.n_o,
            self.reduction,
            self.n_red,
            self.ssq_target,
            self.ssq_best_mean,
            a.successes,
            a.replicates,
            a.outer_iters.mean,
            a.outer_iters.stdev,
            a.fevals.mean,
            a.fevals.stdev,
            a.seconds.mean,
            a.seconds.stdev
        )
    }
}

/// Instances of growing length, each solved with every `(reduction, n_red)` setting.
#[allow(clippy::too_many_arguments)]
pub fn run_nr4(
    n_xs: &[usize],
    n_t: usize,
    fraction: f64,
    epsilon: f64,
    obs_seed: u64,
    base: &SolverConfig,
    settings: &[(ReductionKind, usize)],
    replicates: usize,
    threads: usize,
) -> Result<Vec<Nr4Row>> {
    let mut rows = Vec::new();
    for &n_x in n_xs {
        let inst = Instance::generate(ChannelSpec::with_nx(n_x), n_t, fraction, obs_seed)?;
        let target = inst.ssq_target(epsilon)?;
        let config = SolverConfig {
            ssq_target: target,
            ..base.clone()
        };
        for v in run_nr2(&inst, &config, settings, replicates, threads)? {
            let reps = v.rows();
            rows.push(Nr4Row {
                n_x,
                n_o: inst.obs.len(),
                reduction: v.reduction,
                n_red: v.n_red,
                ssq_target: target,
                ssq_best_mean: mean_stdev(&reps.iter().map(|r| r.ssq_best).collect::<Vec<_>>()).mean,
                aggregates: Aggregates::from_rows(&reps),
            });
        }
    }
    Ok(rows)
}
