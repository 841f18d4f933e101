use nalgebra::DMatrix;
use rand::Rng;

use super::{Proposal, ReducedObjective};
use crate::problem::{Residual, ResidualProblem};
use crate::subsolver::{Bounds, Subsolver};

/// `T(d) = base + M d` with `M ∈ [−1, 1]^{n × n_red}`.
#[derive(Debug, Clone)]
pub struct AffineMap {
    base: Vec<f64>,
    matrix: DMatrix<f64>,
}

impl AffineMap {
    /// Draws `M` with i.i.d. uniform entries on `[−1, 1]`.
    pub fn sample<G: Rng + ?Sized>(base: &[f64], n_red: usize, rng: &mut G) -> Self {
        let n = base.len();
        assert!(n_red >= 1 && n_red <= n, "need 1 <= n_red <= n");
        let entries: Vec<f64> = (0..n * n_red).map(|_| rng.random_range(-1.0..=1.0)).collect();
        Self {
            base: base.to_vec(),
            matrix: DMatrix::from_vec(n, n_red, entries),
        }
    }

    pub fn from_parts(base: Vec<f64>, matrix: DMatrix<f64>) -> Self {
        assert_eq!(base.len(), matrix.nrows());
        Self { base, matrix }
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n_red(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn apply(&self, d: &[f64]) -> Vec<f64> {
        let mut x = self.base.clone();
        for (j, dj) in d.iter().enumerate() {
            if *dj == 0.0 {
                continue;
            }
            for (xi, mij) in x.iter_mut().zip(self.matrix.column(j).iter()) {
                *xi += mij * dj;
            }
        }
        x
    }
}

/// Minimizes `‖F(x_k + M d)‖²` over `d ∈ [−delta, delta]^{n_red}` from `d = 0`.
///
/// `ssq_k` is the cached `‖F(x_k)‖²`. The inner budget is capped by what is
/// left of the problem's global budget.
#[allow(clippy::too_many_arguments)]
pub fn propose_affine<R: Residual>(
    problem: &mut ResidualProblem<R>,
    ssq_k: f64,
    map: &AffineMap,
    subsolver: &dyn Subsolver,
    budget: usize,
    delta: f64,
    tol: f64,
) -> Proposal {
    let n_red = map.n_red();
    let budget = budget.min(problem.remaining());
    let bounds = Bounds::uniform(n_red, -delta, delta).expect("delta > 0");
    let mut reduced = ReducedObjective::new(problem, ssq_k);
    let mut g = |d: &[f64]| reduced.eval_at(map.apply(d));
    subsolver.minimize(&mut g, &vec![0.0; n_red], Some(ssq_k), &bounds, budget, tol);
    reduced.into_proposal(map.base())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::FnResidual;
    use crate::rng::{Purpose, RngStreams};
    use crate::subsolver::NelderMead;

    fn identity_problem(n: usize) -> ResidualProblem<FnResidual<impl Fn(&[f64], &mut [f64])>> {
        ResidualProblem::new(FnResidual::new(n, n, |x: &[f64], out: &mut [f64]| {
            out.copy_from_slice(x)
        }))
    }

    #[test]
    fn entries_in_range_and_centered() {
        let mut rng = RngStreams::new(3).stream(Purpose::AffineMatrix);
        let base = vec![0.0; 1000];
        let mut sum = 0.0;
        let mut count = 0usize;
        for _ in 0..250 {
            let m = AffineMap::sample(&base, 4, &mut rng);
            for v in m.matrix().iter() {
                assert!((-1.0..=1.0).contains(v));
                sum += v;
                count += 1;
            }
        }
        assert_eq!(count, 1_000_000);
        assert!((sum / count as f64).abs() < 0.005);
    }

    #[test]
    fn apply_zero_is_base() {
        let mut rng = RngStreams::new(1).stream(Purpose::AffineMatrix);
        let base = vec![1.0, -2.0, 3.0];
        let m = AffineMap::sample(&base, 2, &mut rng);
        assert_eq!(m.apply(&[0.0, 0.0]), base);
    }

    #[test]
    fn zero_budget_returns_start() {
        let mut p = identity_problem(3);
        let mut rng = RngStreams::new(1).stream(Purpose::AffineMatrix);
        let xk = vec![1.0, 2.0, 3.0];
        let map = AffineMap::sample(&xk, 2, &mut rng);
        let prop = propose_affine(&mut p, 14.0, &map, &NelderMead::default(), 0, 10.0, 1e-8);
        assert_eq!(prop.x, xk);
        assert!(prop.residual.is_none());
        assert_eq!(p.eval_count(), 0);
    }

    #[test]
    fn representable_optimum_is_reached() {
        // F(x) = x, x_k = M c: the reduced problem has minimum 0 at d = −c.
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.5, 1.0, 0.25, -1.0]);
        let c = [0.4, -0.3];
        let xk: Vec<f64> = (0..3).map(|i| m[(i, 0)] * c[0] + m[(i, 1)] * c[1]).collect();
        let ssq_k: f64 = xk.iter().map(|v| v * v).sum();
        let map = AffineMap::from_parts(xk.clone(), m);
        let mut p = identity_problem(3);
        let prop = propose_affine(&mut p, ssq_k, &map, &NelderMead::default(), 400, 10.0, 1e-10);
        assert!(prop.ssq < 1e-12, "{}", prop.ssq);
        assert_eq!(p.eval_count(), prop.evals);
    }

    #[test]
    fn trial_stays_in_column_span() {
        let mut rng = RngStreams::new(9).stream(Purpose::AffineMatrix);
        let n = 12;
        let res = FnResidual::new(n, n, |x: &[f64], out: &mut [f64]| {
            for (i, (o, v)) in out.iter_mut().zip(x).enumerate() {
                *o = v.powi(3) + (i as f64) * 0.1 - 0.3;
            }
        });
        let mut p = ResidualProblem::new(res);
        let xk = vec![0.2; n];
        let (f0, _) = p.objective_value(&xk).unwrap();
        let map = AffineMap::sample(&xk, 3, &mut rng);
        let before = p.eval_count();
        let prop = propose_affine(&mut p, 2.0 * f0, &map, &NelderMead::default(), 60, 10.0, 1e-8);
        assert_eq!(p.eval_count() - before, prop.evals);
        assert!(prop.ssq <= 2.0 * f0);
        let diff: Vec<f64> = prop.x.iter().zip(&xk).map(|(a, b)| a - b).collect();
        let resid = crate::reduction::tests_support::span_residual(map.matrix(), &diff);
        assert!(resid < 1e-10, "{resid}");
    }
}
