//! Dimension-reduction strategies that produce the trial point of an outer
//! iteration.
//!
//! Both strategies minimize `‖F‖²` over a low-dimensional image through the
//! current iterate with a bound-constrained [`Subsolver`](crate::Subsolver).
//! Inner evaluations go through the shared [`ResidualProblem`], so they count
//! against the global budget.

mod affine;
mod spline;

pub use affine::{propose_affine, AffineMap};
pub use spline::{canonicalize, eval_spline, propose_spline, spline_displacement, CanonicalSpline, SplineParams};

use crate::problem::{Residual, ResidualProblem};

/// A reduction's trial point together with its cached residual.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub x: Vec<f64>,
    /// `F(x)` when `x` differs from the start point, `None` otherwise.
    pub residual: Option<Vec<f64>>,
    /// `‖F(x)‖²` at the returned point.
    pub ssq: f64,
    pub evals: usize,
}

/// Runs a reduced objective `ssq(T(z))` through the problem, remembering the
/// best image point and its residual.
pub(crate) struct ReducedObjective<'a, R> {
    pub problem: &'a mut ResidualProblem<R>,
    pub best_ssq: f64,
    pub best: Option<(Vec<f64>, Vec<f64>)>,
    pub evals: usize,
}

impl<'a, R: Residual> ReducedObjective<'a, R> {
    pub fn new(problem: &'a mut ResidualProblem<R>, start_ssq: f64) -> Self {
        Self {
            problem,
            best_ssq: start_ssq,
            best: None,
            evals: 0,
        }
    }

    pub fn eval_at(&mut self, x: Vec<f64>) -> f64 {
        match self.problem.objective_value(&x) {
            Ok((f, r)) => {
                self.evals += 1;
                let ssq = 2.0 * f;
                if ssq < self.best_ssq {
                    self.best_ssq = ssq;
                    self.best = Some((x, r));
                }
                if ssq.is_nan() {
                    f64::INFINITY
                } else {
                    ssq
                }
            }
            // The caller caps the inner budget at the global remainder, so
            // this only fires if that contract is broken.
            Err(_) => f64::INFINITY,
        }
    }

    pub fn into_proposal(self, x_k: &[f64]) -> Proposal {
        match self.best {
            Some((x, r)) => Proposal {
                x,
                residual: Some(r),
                ssq: self.best_ssq,
                evals: self.evals,
            },
            None => Proposal {
                x: x_k.to_vec(),
                residual: None,
                ssq: self.best_ssq,
                evals: self.evals,
            },
        }
    }
}

#[cfg(test)]
pub(crate) mod tests_support {
    use nalgebra::{DMatrix, DVector};

    /// `‖v − M M⁺ v‖` by least-squares projection onto the column span.
    pub fn span_residual(m: &DMatrix<f64>, v: &[f64]) -> f64 {
        let b = DVector::from_column_slice(v);
        let coef = m.clone().svd(true, true).solve(&b, 1e-14).expect("svd solve");
        (m * coef - b).norm()
    }
}
