//! Solver configuration and run records.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the trial point of each outer iteration is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionKind {
    /// Minimize over `x_k + M d` with a fresh random `n × n_red` matrix `M`.
    Affine,
    /// Minimize over `x_k + d(v, p)` where `d` samples a linear spline with
    /// `κ = (n_red − 2) / 2` movable interior nodes.
    Spline,
    /// No reduction: every iteration uses the random-direction line search.
    Disabled,
}

impl std::fmt::Display for ReductionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ReductionKind::Affine => "affine",
            ReductionKind::Spline => "spline",
            ReductionKind::Disabled => "disabled",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stop once `‖F(x)‖² ≤ ssq_target`. Note the scale: this is `2 f`.
    pub ssq_target: f64,
    /// Radius of the direction ball for the fallback line search.
    pub delta: f64,
    /// Descent fraction, in (0, 1).
    pub gamma: f64,
    /// Base of `η_k = eta0 / (k+1)²`. `None` picks `1e-3 · max(1, f(x⁰))`.
    pub eta0: Option<f64>,
    /// Secant memory `p`.
    pub memory_p: usize,
    pub accelerate: bool,
    pub reduction: ReductionKind,
    pub n_red: usize,
    /// Residual evaluations per reduced solve. `None` means `100 · n_red`.
    pub subsolver_budget: Option<usize>,
    pub subsolver_tol: f64,
    pub max_outer_iters: usize,
    pub max_fevals: usize,
    pub max_halvings: usize,
    pub rcond: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            ssq_target: 0.0,
            delta: 10.0,
            gamma: 1e-4,
            eta0: None,
            memory_p: 1000,
            accelerate: true,
            reduction: ReductionKind::Affine,
            n_red: 4,
            subsolver_budget: None,
            subsolver_tol: 1e-8,
            max_outer_iters: 100_000,
            max_fevals: 1_000_000,
            max_halvings: 60,
            rcond: 1e-12,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad("delta must be positive");
        }
        if self.n_red < 1 {
            return bad("n_red must be at least 1");
        }
        if self.reduction == ReductionKind::Spline && (self.n_red < 2 || !self.n_red.is_multiple_of(2)) {
            return bad("spline reduction needs an even n_red >= 2 (n_red = 2 kappa + 2)");
        }
        if self.memory_p < 1 {
            return bad("memory_p must be at least 1");
        }
        if !(self.rcond > 0.0 && self.rcond < 1.0) {
            return bad("rcond must lie in (0, 1)");
        }
        if let Some(e) = self.eta0 {
            if !(e > 0.0 && e.is_finite()) {
                return bad("eta0 must be positive");
            }
        }
        if !(self.subsolver_tol > 0.0) {
            return bad("subsolver_tol must be positive");
        }
        if self.ssq_target.is_nan() {
            return bad("ssq_target is NaN");
        }
        Ok(())
    }

    pub fn subsolver_budget(&self) -> usize {
        self.subsolver_budget.unwrap_or(100 * self.n_red)
    }

    /// Interior node count of the spline reduction.
    pub fn kappa(&self) -> usize {
        self.n_red.saturating_sub(2) / 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Reduction,
    Linesearch,
}

impl std::fmt::Display for StepKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StepKind::Reduction => "reduction",
            StepKind::Linesearch => "linesearch",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    TargetReached,
    FevalBudget,
    IterBudget,
    Stalled,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::TargetReached => "target_reached",
            Termination::FevalBudget => "feval_budget",
            Termination::IterBudget => "iter_budget",
            Termination::Stalled => "stalled",
        })
    }
}

/// One completed outer iteration `k → k+1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceEntry {
    pub k: usize,
    /// `f(x^k)`.
    pub f: f64,
    /// `f(x^trial)` for the accepted trial.
    pub f_trial: f64,
    /// `f(x^{k+1})`.
    pub f_next: f64,
    pub eta: f64,
    pub alpha: f64,
    pub step_kind: StepKind,
    pub accel_used: bool,
    /// Norm of the step `d^k = x^trial − x^k` that defined `v^k`.
    pub step_norm: f64,
    /// Residual evaluations spent up to the end of this iteration.
    pub fevals_cum: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveResult {
    pub x_best: Vec<f64>,
    pub f_best: f64,
    /// `‖F(x_best)‖² = 2 f_best`.
    pub ssq_best: f64,
    pub f_initial: f64,
    pub outer_iters: usize,
    pub fevals: usize,
    pub accel_accepts: usize,
    pub accel_rejects: usize,
    pub termination: Termination,
    pub trace: Vec<TraceEntry>,
}

impl SolveResult {
    pub fn reached_target(&self) -> bool {
        self.termination == Termination::TargetReached
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        SolverConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let cases: Vec<Box<dyn Fn(&mut SolverConfig)>> = vec![
            Box::new(|c| c.gamma = 0.0),
            Box::new(|c| c.gamma = 1.0),
            Box::new(|c| c.delta = 0.0),
            Box::new(|c| c.n_red = 0),
            Box::new(|c| c.memory_p = 0),
            Box::new(|c| c.rcond = 1.0),
            Box::new(|c| c.eta0 = Some(0.0)),
            Box::new(|c| {
                c.reduction = ReductionKind::Spline;
                c.n_red = 5;
            }),
        ];
        for mutate in cases {
            let mut c = SolverConfig::default();
            mutate(&mut c);
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn kappa_from_nred() {
        let c = SolverConfig {
            reduction: ReductionKind::Spline,
            n_red: 20,
            ..Default::default()
        };
        assert_eq!(c.kappa(), 9);
        assert_eq!(c.subsolver_budget(), 2000);
    }
}
