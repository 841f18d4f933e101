//! The outer loop: reduction proposal, descent tests, fallback line search
//! and secant acceleration.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::{ReductionKind, SolveResult, SolverConfig, StepKind, Termination, TraceEntry};
use crate::error::{Error, Result};
use crate::problem::{eta, Residual, ResidualProblem};
use crate::reduction::{propose_affine, propose_spline, AffineMap};
use crate::rng::{Purpose, RngStreams};
use crate::secant::{accept_accel, SecantHistory};
use crate::subsolver::Subsolver;

/// Acceptance test for a reduction trial: `f_trial ≤ f_k + η_k − γ (f_k − f_target)`.
pub fn reduction_descent_test(f_trial: f64, f_k: f64, eta_k: f64, gamma: f64, f_target: f64) -> bool {
    f_trial <= f_k + eta_k - gamma * (f_k - f_target)
}

/// Acceptance test for a line-search trial at step `alpha`:
/// `f_trial ≤ f_k + η_k − γ α² (f_k − f_target)`.
pub fn linesearch_descent_test(
    f_trial: f64,
    f_k: f64,
    eta_k: f64,
    gamma: f64,
    alpha: f64,
    f_target: f64,
) -> bool {
    f_trial <= f_k + eta_k - gamma * alpha * alpha * (f_k - f_target)
}

/// Uniform draw from the unit sphere in `Rⁿ` (normalized Gaussian vector).
pub fn random_unit_vector<G: Rng + ?Sized>(n: usize, rng: &mut G) -> Vec<f64> {
    assert!(n >= 1);
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            return v.into_iter().map(|a| a / norm).collect();
        }
    }
}

/// Minimizer of `⟨v, d⟩` over the Euclidean ball `‖d‖ ≤ delta`.
pub fn linear_direction(v: &[f64], delta: f64) -> Vec<f64> {
    v.iter().map(|a| -delta * a).collect()
}

/// State of the current outer iterate.
#[derive(Debug, Clone)]
pub struct IterationState {
    pub k: usize,
    pub x: Vec<f64>,
    pub residual: Vec<f64>,
    pub f: f64,
    pub eta: f64,
}

/// An accepted trial point.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub x: Vec<f64>,
    pub residual: Vec<f64>,
    pub f: f64,
    pub alpha: f64,
    pub kind: StepKind,
}

/// Halving line search along `d = −delta·v` from the current iterate.
pub fn fallback_linesearch<R: Residual>(
    state: &IterationState,
    v: &[f64],
    config: &SolverConfig,
    problem: &mut ResidualProblem<R>,
) -> Result<StepOutcome> {
    let d = linear_direction(v, config.delta);
    let f_target = 0.5 * config.ssq_target;
    let mut alpha = 1.0;
    for _ in 0..=config.max_halvings {
        let x: Vec<f64> = state.x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
        let (f, residual) = problem.objective_value(&x)?;
        if linesearch_descent_test(f, state.f, state.eta, config.gamma, alpha, f_target) {
            return Ok(StepOutcome {
                x,
                residual,
                f,
                alpha,
                kind: StepKind::Linesearch,
            });
        }
        alpha *= 0.5;
    }
    Err(Error::Stalled(config.max_halvings))
}

/// Runs the solver from `x0`.
///
/// Budget exhaustion and line-search stalls are not errors: they end the run
/// with the corresponding [`Termination`] and the best iterate found. Errors
/// are reserved for invalid input.
pub fn solve<R: Residual>(
    problem: &mut ResidualProblem<R>,
    x0: &[f64],
    config: &SolverConfig,
    subsolver: &dyn Subsolver,
) -> Result<SolveResult> {
    config.validate()?;
    let n = problem.n();
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x0.len(),
        });
    }
    match config.reduction {
        ReductionKind::Affine if config.n_red > n => {
            return Err(Error::InvalidConfig(format!(
                "affine n_red = {} exceeds n = {n}",
                config.n_red
            )))
        }
        ReductionKind::Spline if n < 2 => {
            return Err(Error::InvalidConfig("spline reduction needs n >= 2".into()))
        }
        _ => {}
    }
    if config.max_fevals == 0 {
        return Err(Error::InvalidConfig("max_fevals must be at least 1".into()));
    }

    let start_evals = problem.eval_count();
    problem.set_budget(start_evals.saturating_add(config.max_fevals));
    let (f0, r0) = problem.objective_value(x0)?;

    let eta0 = config.eta0.unwrap_or(1e-3 * f0.max(1.0));
    let f_target = 0.5 * config.ssq_target;
    let streams = RngStreams::new(config.seed);
    let mut dir_rng = streams.stream(Purpose::Direction);
    let mut affine_rng = streams.stream(Purpose::AffineMatrix);
    let mut spline_rng = streams.stream(Purpose::SplineInit);
    let mut history = SecantHistory::new(config.memory_p);

    let mut state = IterationState {
        k: 0,
        x: x0.to_vec(),
        residual: r0,
        f: f0,
        eta: eta(0, eta0),
    };
    let mut best = (state.x.clone(), state.f);
    let mut trace = Vec::new();
    let (mut accel_accepts, mut accel_rejects) = (0, 0);

    let termination = loop {
        if 2.0 * state.f <= config.ssq_target {
            break Termination::TargetReached;
        }
        if state.k >= config.max_outer_iters {
            break Termination::IterBudget;
        }
        state.eta = eta(state.k, eta0);
        let ssq_k = 2.0 * state.f;

        let proposal = match config.reduction {
            ReductionKind::Disabled => None,
            ReductionKind::Affine => {
                let map = AffineMap::sample(&state.x, config.n_red, &mut affine_rng);
                Some(propose_affine(
                    problem,
                    ssq_k,
                    &map,
                    subsolver,
                    config.subsolver_budget(),
                    config.delta,
                    config.subsolver_tol,
                ))
            }
            ReductionKind::Spline => Some(propose_spline(
                problem,
                &state.x,
                ssq_k,
                config.kappa(),
                subsolver,
                config.subsolver_budget(),
                config.delta,
                config.subsolver_tol,
                &mut spline_rng,
            )?),
        };

        let reduced = proposal.and_then(|p| {
            let residual = p.residual?;
            let f = 0.5 * p.ssq;
            (p.x != state.x && reduction_descent_test(f, state.f, state.eta, config.gamma, f_target))
                .then_some(StepOutcome {
                    x: p.x,
                    residual,
                    f,
                    alpha: 1.0,
                    kind: StepKind::Reduction,
                })
        });

        let trial = match reduced {
            Some(t) => t,
            None => {
                let v = random_unit_vector(n, &mut dir_rng);
                match fallback_linesearch(&state, &v, config, problem) {
                    Ok(t) => t,
                    Err(Error::BudgetExhausted { .. }) => break Termination::FevalBudget,
                    Err(Error::Stalled(_)) => break Termination::Stalled,
                    Err(e) => return Err(e),
                }
            }
        };
        let step_norm = trial
            .x
            .iter()
            .zip(&state.x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();

        let mut next = (trial.x.clone(), trial.residual.clone(), trial.f);
        let mut accel_used = false;
        if config.accelerate && state.k > 0 && problem.remaining() > 0 {
            if let Some(xa) =
                history.accelerate(&state.x, &state.residual, &trial.x, &trial.residual, config.rcond)
            {
                if xa.iter().all(|v| v.is_finite()) {
                    let (fa, ra) = problem.objective_value(&xa)?;
                    if accept_accel(fa, trial.f) {
                        next = (xa, ra, fa);
                        accel_used = true;
                        accel_accepts += 1;
                    } else {
                        accel_rejects += 1;
                    }
                } else {
                    accel_rejects += 1;
                }
            }
        }

        if config.accelerate {
            history.push_accepted(&state.x, &next.0, &state.residual, &next.1);
        }
        trace.push(TraceEntry {
            k: state.k,
            f: state.f,
            f_trial: trial.f,
            f_next: next.2,
            eta: state.eta,
            alpha: trial.alpha,
            step_kind: trial.kind,
            accel_used,
            step_norm,
            fevals_cum: problem.eval_count() - start_evals,
        });

        state.k += 1;
        state.x = next.0;
        state.residual = next.1;
        state.f = next.2;
        if state.f < best.1 {
            best = (state.x.clone(), state.f);
        }
    };

    Ok(SolveResult {
        ssq_best: 2.0 * best.1,
        x_best: best.0,
        f_best: best.1,
        f_initial: f0,
        outer_iters: state.k,
        fevals: problem.eval_count() - start_evals,
        accel_accepts,
        accel_rejects,
        termination,
        trace,
    })
}

/// Checks a run record against the framework's guarantees and returns a
/// description of every violation:
///
/// * `f(x^{k+1}) ≤ f(x^k) + η_k`
/// * `f(x^k) ≤ f(x^0) + Σ_{j<k} η_j`
/// * `f(x^{k+1}) ≤ f(x^trial)`
/// * `α_k` is a power of two not above 1, and exactly 1 for reduction steps
/// * consecutive entries chain (`f` of entry `k+1` is `f_next` of entry `k`)
pub fn trace_violations(result: &SolveResult) -> Vec<String> {
    let mut out = Vec::new();
    let mut eta_sum = 0.0;
    for (idx, e) in result.trace.iter().enumerate() {
        if e.k != idx {
            out.push(format!("entry {idx} has k = {}", e.k));
        }
        if !(e.f_next <= e.f + e.eta) {
            out.push(format!("k={}: f_next {} > f {} + eta {}", e.k, e.f_next, e.f, e.eta));
        }
        let slack = 1e-14 * (result.f_initial.abs() + eta_sum);
        if !(e.f <= result.f_initial + eta_sum + slack) {
            out.push(format!(
                "k={}: f {} exceeds f0 {} + accumulated eta {}",
                e.k, e.f, result.f_initial, eta_sum
            ));
        }
        if !(e.f_next <= e.f_trial) {
            out.push(format!("k={}: f_next {} > f_trial {}", e.k, e.f_next, e.f_trial));
        }
        let log2 = e.alpha.log2();
        if !(e.alpha > 0.0 && e.alpha <= 1.0 && log2 == log2.round()) {
            out.push(format!("k={}: alpha {} is not a power of two", e.k, e.alpha));
        }
        if e.step_kind == StepKind::Reduction && e.alpha != 1.0 {
            out.push(format!("k={}: reduction step with alpha {}", e.k, e.alpha));
        }
        if let Some(next) = result.trace.get(idx + 1) {
            if next.f != e.f_next {
                out.push(format!("k={}: chain broken ({} vs {})", e.k, e.f_next, next.f));
            }
            if next.fevals_cum < e.fevals_cum {
                out.push(format!("k={}: fevals decreased", e.k));
            }
        }
        eta_sum += e.eta;
    }
    if result.ssq_best != 2.0 * result.f_best {
        out.push("ssq_best != 2 f_best".into());
    }
    if result.reached_target() != (result.termination == Termination::TargetReached) {
        out.push("termination flag mismatch".into());
    }
    out
}
