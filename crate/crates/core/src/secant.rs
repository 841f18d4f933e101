//! Sequential-secant acceleration.
//!
//! Given the last `p` accepted steps `s^j = x^{j+1} − x^j` with residual
//! differences `y^j = F(x^{j+1}) − F(x^j)`, plus the current trial pair, the
//! accelerated point is `x^k − S Y† F(x^k)`, the minimizer of the secant
//! linear model over the affine span of the steps.
//!
//! `Y†F` is computed from a thin QR factorization of the history columns that
//! is updated one column at a time. Whenever `‖R‖_F ‖R⁻¹‖_F ≤ 1/rcond` the
//! factorization certifies that no singular value would be truncated, and the
//! pseudo-inverse solution is the plain least-squares solution from back
//! substitution. Otherwise the truncated-SVD kernel [`min_norm_lstsq`] is used
//! on the assembled matrix.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

/// Minimum-norm least-squares solution `z = Y† r` by truncated SVD.
///
/// Singular values below `rcond · σ_max` are treated as zero. Returns the zero
/// vector when `Y` has no columns or every singular value is truncated.
pub fn min_norm_lstsq(y: &DMatrix<f64>, r: &DVector<f64>, rcond: f64) -> DVector<f64> {
    let q = y.ncols();
    if q == 0 || y.nrows() == 0 {
        return DVector::zeros(q);
    }
    assert_eq!(y.nrows(), r.len(), "residual length does not match Y");
    let svd = y.clone().svd(true, true);
    let (u, v_t) = match (svd.u.as_ref(), svd.v_t.as_ref()) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return DVector::zeros(q),
    };
    let sigma = &svd.singular_values;
    let smax = sigma.iter().cloned().fold(0.0, f64::max);
    if !(smax > 0.0) {
        return DVector::zeros(q);
    }
    let cutoff = rcond * smax;
    let mut z = DVector::zeros(q);
    for (i, &s) in sigma.iter().enumerate() {
        if s < cutoff || s == 0.0 {
            continue;
        }
        let coef = u.column(i).dot(r) / s;
        z.axpy(coef, &v_t.row(i).transpose(), 1.0);
    }
    z
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Thin QR of a column sequence, `Y = Q R`, updated column by column.
#[derive(Debug, Clone, Default)]
struct ColumnQr {
    q: Vec<Vec<f64>>,
    /// Column `j` of `R`, rows `0..=j`.
    r: Vec<Vec<f64>>,
    /// Column `j` of `R⁻¹`, rows `0..=j`.
    rinv: Vec<Vec<f64>>,
    frob_r2: f64,
    frob_rinv2: f64,
}

struct Extension {
    q: Vec<f64>,
    r: Vec<f64>,
    rinv: Vec<f64>,
}

impl ColumnQr {
    fn len(&self) -> usize {
        self.q.len()
    }

    /// Orthogonalizes `y` against the current basis (classical Gram-Schmidt,
    /// applied twice).
    fn extension(&self, y: &[f64]) -> Extension {
        let k = self.len();
        let mut w = y.to_vec();
        let mut coeffs = vec![0.0; k];
        for _ in 0..2 {
            let c: Vec<f64> = self.q.iter().map(|qj| dot(qj, &w)).collect();
            for (qj, cj) in self.q.iter().zip(&c) {
                for (wi, qi) in w.iter_mut().zip(qj) {
                    *wi -= cj * qi;
                }
            }
            for (a, b) in coeffs.iter_mut().zip(&c) {
                *a += b;
            }
        }
        let rho = norm_sq(&w).sqrt();
        let qcol = if rho > 0.0 {
            w.iter().map(|v| v / rho).collect()
        } else {
            vec![0.0; w.len()]
        };
        // new column of R⁻¹: [−R⁻¹ c / ρ; 1/ρ]
        let mut t = vec![0.0; k];
        for (j, col) in self.rinv.iter().enumerate() {
            let cj = coeffs[j];
            for (ti, v) in t.iter_mut().zip(col) {
                *ti += v * cj;
            }
        }
        let mut rinv: Vec<f64> = t.iter().map(|v| -v / rho).collect();
        rinv.push(1.0 / rho);
        let mut r = coeffs;
        r.push(rho);
        Extension { q: qcol, r, rinv }
    }

    fn push(&mut self, e: Extension) {
        self.frob_r2 += norm_sq(&e.r);
        self.frob_rinv2 += norm_sq(&e.rinv);
        self.q.push(e.q);
        self.r.push(e.r);
        self.rinv.push(e.rinv);
    }

    /// Drops the first column: Givens rotations restore the triangular shape
    /// of `R` and are mirrored onto `Q`.
    fn remove_first(&mut self) {
        let k = self.len();
        if k == 0 {
            return;
        }
        let mut h: Vec<Vec<f64>> = self.r.drain(..).skip(1).collect();
        for jp in 0..h.len() {
            let a = h[jp][jp];
            let b = h[jp][jp + 1];
            let rho = a.hypot(b);
            if rho == 0.0 {
                continue;
            }
            let (c, s) = (a / rho, b / rho);
            for col in h.iter_mut().skip(jp) {
                let (x, y) = (col[jp], col[jp + 1]);
                col[jp] = c * x + s * y;
                col[jp + 1] = -s * x + c * y;
            }
            let (left, right) = self.q.split_at_mut(jp + 1);
            let (qa, qb) = (&mut left[jp], &mut right[0]);
            for (x, y) in qa.iter_mut().zip(qb.iter_mut()) {
                let (u, v) = (*x, *y);
                *x = c * u + s * v;
                *y = -s * u + c * v;
            }
        }
        for (jp, col) in h.iter_mut().enumerate() {
            col.truncate(jp + 1);
        }
        self.q.pop();
        self.r = h;
        self.recompute_inverse();
    }

    fn recompute_inverse(&mut self) {
        let k = self.len();
        self.rinv = (0..k)
            .map(|j| {
                let mut x = vec![0.0; j + 1];
                x[j] = 1.0 / self.r[j][j];
                for i in (0..j).rev() {
                    let s: f64 = (i + 1..=j).map(|l| self.r[l][i] * x[l]).sum();
                    x[i] = -s / self.r[i][i];
                }
                x
            })
            .collect();
        self.frob_r2 = self.r.iter().map(|c| norm_sq(c)).sum();
        self.frob_rinv2 = self.rinv.iter().map(|c| norm_sq(c)).sum();
    }
}

/// Bounded FIFO of accepted `(s, y)` pairs.
#[derive(Debug, Clone)]
pub struct SecantHistory {
    capacity: usize,
    pairs: VecDeque<(Vec<f64>, Vec<f64>)>,
    /// Factorization of the pairs whose `y` is nonzero, in FIFO order.
    qr: ColumnQr,
}

/// Which linear-algebra route produced an accelerated point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveRoute {
    Factorized,
    Svd,
}

impl SecantHistory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "secant memory must be at least 1");
        Self {
            capacity,
            pairs: VecDeque::new(),
            qr: ColumnQr::default(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Stored pairs, oldest first.
    pub fn pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.pairs.iter().map(|(s, y)| (s.as_slice(), y.as_slice()))
    }

    /// Records the accepted step `x_k → x_next`.
    pub fn push_accepted(&mut self, x_k: &[f64], x_next: &[f64], f_k: &[f64], f_next: &[f64]) {
        let s: Vec<f64> = x_next.iter().zip(x_k).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = f_next.iter().zip(f_k).map(|(a, b)| a - b).collect();
        if let Some((_, y0)) = self.pairs.front() {
            assert_eq!(y0.len(), y.len(), "residual dimension changed");
        }
        if norm_sq(&y) > 0.0 {
            let e = self.qr.extension(&y);
            self.qr.push(e);
        }
        self.pairs.push_back((s, y));
        if self.pairs.len() > self.capacity {
            let (_, y_old) = self.pairs.pop_front().expect("nonempty");
            if norm_sq(&y_old) > 0.0 {
                self.qr.remove_first();
            }
        }
    }

    fn kept_steps(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.pairs
            .iter()
            .filter(|(_, y)| norm_sq(y) > 0.0)
            .map(|(s, _)| s)
    }

    /// The accelerated point `x_k − S Y† F_k`, or `None` when every column
    /// has a zero residual difference.
    pub fn accelerate(
        &self,
        x_k: &[f64],
        f_k: &[f64],
        x_trial: &[f64],
        f_trial: &[f64],
        rcond: f64,
    ) -> Option<Vec<f64>> {
        self.accelerate_with_route(x_k, f_k, x_trial, f_trial, rcond)
            .map(|(x, _)| x)
    }

    pub fn accelerate_with_route(
        &self,
        x_k: &[f64],
        f_k: &[f64],
        x_trial: &[f64],
        f_trial: &[f64],
        rcond: f64,
    ) -> Option<(Vec<f64>, SolveRoute)> {
        let s_t: Vec<f64> = x_trial.iter().zip(x_k).map(|(a, b)| a - b).collect();
        let y_t: Vec<f64> = f_trial.iter().zip(f_k).map(|(a, b)| a - b).collect();
        let trial_kept = norm_sq(&y_t) > 0.0;

        let mut steps: Vec<&[f64]> = self.kept_steps().map(|s| s.as_slice()).collect();
        if trial_kept {
            steps.push(&s_t);
        }
        if steps.is_empty() {
            return None;
        }

        let (z, route) = match self.factorized_solve(f_k, trial_kept.then_some(&y_t[..]), rcond) {
            Some(z) => (z, SolveRoute::Factorized),
            None => {
                let mut cols: Vec<&[f64]> = self
                    .pairs
                    .iter()
                    .filter(|(_, y)| norm_sq(y) > 0.0)
                    .map(|(_, y)| y.as_slice())
                    .collect();
                if trial_kept {
                    cols.push(&y_t);
                }
                let y = DMatrix::from_fn(f_k.len(), cols.len(), |i, j| cols[j][i]);
                let r = DVector::from_column_slice(f_k);
                (min_norm_lstsq(&y, &r, rcond).iter().cloned().collect(), SolveRoute::Svd)
            }
        };

        let mut x = x_k.to_vec();
        for (s, zj) in steps.iter().zip(&z) {
            for (xi, si) in x.iter_mut().zip(s.iter()) {
                *xi -= zj * si;
            }
        }
        Some((x, route))
    }

    /// Back-substitution solve when the factorization certifies full rank
    /// with condition number below `1/rcond`.
    fn factorized_solve(&self, f_k: &[f64], y_t: Option<&[f64]>, rcond: f64) -> Option<Vec<f64>> {
        let ext = y_t.map(|y| self.qr.extension(y));
        let (mut fr2, mut fi2) = (self.qr.frob_r2, self.qr.frob_rinv2);
        if let Some(e) = &ext {
            fr2 += norm_sq(&e.r);
            fi2 += norm_sq(&e.rinv);
        }
        let bound = (fr2 * fi2).sqrt();
        if !(bound <= 1.0 / rcond) {
            return None;
        }
        let mut qs: Vec<&[f64]> = self.qr.q.iter().map(|q| q.as_slice()).collect();
        let mut rs: Vec<&[f64]> = self.qr.r.iter().map(|r| r.as_slice()).collect();
        if let Some(e) = &ext {
            qs.push(&e.q);
            rs.push(&e.r);
        }
        let mut z: Vec<f64> = qs.iter().map(|q| dot(q, f_k)).collect();
        for j in (0..z.len()).rev() {
            z[j] /= rs[j][j];
            let zj = z[j];
            for i in 0..j {
                z[i] -= rs[j][i] * zj;
            }
        }
        z.iter().all(|v| v.is_finite()).then_some(z)
    }
}

/// The accelerated point replaces the trial point iff it is no worse.
/// NaN never wins.
pub fn accept_accel(f_accel: f64, f_trial: f64) -> bool {
    f_accel <= f_trial
}
