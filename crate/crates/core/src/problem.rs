//! Residual maps and the least-squares objective built on them.

use crate::error::{Error, Result};

/// A residual map `F: Rⁿ → Rᵐ`.
///
/// Implementations must be deterministic: the same input gives a bitwise
/// identical residual. `eval` takes `&self`, so independent solver instances
/// can share one residual concurrently.
pub trait Residual {
    /// Number of variables.
    fn n(&self) -> usize;
    /// Number of residual components.
    fn m(&self) -> usize;
    /// Writes `F(x)` into `out` (length `m`).
    fn eval(&self, x: &[f64], out: &mut [f64]);
}

impl<R: Residual + ?Sized> Residual for &R {
    fn n(&self) -> usize {
        (**self).n()
    }
    fn m(&self) -> usize {
        (**self).m()
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        (**self).eval(x, out)
    }
}

/// Closure-backed residual, mostly for tests and small problems.
pub struct FnResidual<F> {
    n: usize,
    m: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnResidual<F> {
    pub fn new(n: usize, m: usize, f: F) -> Self {
        Self { n, m, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> Residual for FnResidual<F> {
    fn n(&self) -> usize {
        self.n
    }
    fn m(&self) -> usize {
        self.m
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}

/// `½ Σ rᵢ²`.
pub fn half_sum_squares(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

/// Summable slack sequence `η_k = eta0 / (k+1)²`.
pub fn eta(k: usize, eta0: f64) -> f64 {
    let k1 = (k + 1) as f64;
    eta0 / (k1 * k1)
}

/// A residual map together with its evaluation counter and budget.
///
/// Every call to [`ResidualProblem::evaluate`] counts exactly once. The best
/// objective value ever evaluated is remembered so that budget exhaustion can
/// hand back something useful.
pub struct ResidualProblem<R> {
    residual: R,
    evals: usize,
    budget: usize,
    best: Option<(Vec<f64>, f64)>,
}

impl<R: Residual> ResidualProblem<R> {
    pub fn new(residual: R) -> Self {
        Self {
            residual,
            evals: 0,
            budget: usize::MAX,
            best: None,
        }
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn set_budget(&mut self, budget: usize) {
        self.budget = budget;
    }

    pub fn n(&self) -> usize {
        self.residual.n()
    }

    pub fn m(&self) -> usize {
        self.residual.m()
    }

    pub fn eval_count(&self) -> usize {
        self.evals
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn remaining(&self) -> usize {
        self.budget.saturating_sub(self.evals)
    }

    pub fn residual(&self) -> &R {
        &self.residual
    }

    /// Best `(x, f)` over every evaluation so far.
    pub fn best(&self) -> Option<(&[f64], f64)> {
        self.best.as_ref().map(|(x, f)| (x.as_slice(), *f))
    }

    /// Evaluates `F(x)`.
    pub fn evaluate(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        self.objective_value(x).map(|(_, r)| r)
    }

    /// Evaluates `F(x)` and `f(x) = ½‖F(x)‖²` together.
    pub fn objective_value(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: x.len(),
            });
        }
        if self.evals >= self.budget {
            return Err(Error::BudgetExhausted {
                budget: self.budget,
                best: self.best.clone(),
            });
        }
        let mut r = vec![0.0; self.m()];
        self.residual.eval(x, &mut r);
        self.evals += 1;
        let f = half_sum_squares(&r);
        let improves = match &self.best {
            Some((_, fb)) => f < *fb,
            None => !f.is_nan(),
        };
        if improves {
            self.best = Some((x.to_vec(), f));
        }
        Ok((f, r))
    }
}
