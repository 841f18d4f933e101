//! Bound-constrained derivative-free inner minimizers.
//!
//! The reductions only need "some point no worse than the start, inside the
//! box, within a fixed number of evaluations". [`Subsolver`] captures that
//! contract; [`NelderMead`] is the default implementation.

use crate::error::{Error, Result};

/// Componentwise box `lower ≤ x ≤ upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::Domain("lower bound exceeds upper bound".into()));
        }
        Ok(Self { lower, upper })
    }

    /// The same interval `[lo, hi]` in every coordinate.
    pub fn uniform(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi; n])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, l), u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerReport {
    pub x_best: Vec<f64>,
    pub f_best: f64,
    pub nevals: usize,
    pub converged: bool,
}

pub trait Subsolver {
    /// Minimizes `g` over `bounds` starting from `x0`.
    ///
    /// `f0`, when known, is `g(x0)` and saves one evaluation. Implementations
    /// never evaluate `g` outside `bounds`, never call it more than `budget`
    /// times, and return a point no worse than `x0`.
    fn minimize(
        &self,
        g: &mut dyn FnMut(&[f64]) -> f64,
        x0: &[f64],
        f0: Option<f64>,
        bounds: &Bounds,
        budget: usize,
        tol: f64,
    ) -> InnerReport;
}

/// Nelder-Mead simplex search with componentwise projection onto the box.
///
/// Uses the dimension-adaptive coefficients of Gao and Han for `n ≥ 2`. When
/// the simplex collapses below `tol` it is rebuilt once around the incumbent.
#[derive(Debug, Clone)]
pub struct NelderMead {
    /// Initial edge is `edge_fraction · min(width, 1)` per coordinate.
    pub edge_fraction: f64,
    pub restarts: usize,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            edge_fraction: 0.1,
            restarts: 1,
        }
    }
}

struct Counted<'a> {
    g: &'a mut dyn FnMut(&[f64]) -> f64,
    nevals: usize,
    budget: usize,
    best_x: Vec<f64>,
    best_f: f64,
}

impl Counted<'_> {
    fn exhausted(&self) -> bool {
        self.nevals >= self.budget
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        debug_assert!(!self.exhausted());
        self.nevals += 1;
        let v = (self.g)(x);
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if v < self.best_f {
            self.best_f = v;
            self.best_x.copy_from_slice(x);
        }
        v
    }
}

impl NelderMead {
    fn coefficients(n: usize) -> (f64, f64, f64, f64) {
        if n >= 2 {
            let nf = n as f64;
            (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf)
        } else {
            (1.0, 2.0, 0.5, 0.5)
        }
    }

    fn edges(&self, bounds: &Bounds) -> Vec<f64> {
        bounds
            .lower()
            .iter()
            .zip(bounds.upper())
            .map(|(l, u)| self.edge_fraction * (u - l).min(1.0))
            .collect()
    }

    /// Vertices `x + h_i e_i`, flipped to `x − h_i e_i` where that leaves the box.
    fn build_simplex(
        center: &[f64],
        f_center: f64,
        edges: &[f64],
        bounds: &Bounds,
        counted: &mut Counted,
    ) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
        let n = center.len();
        let mut xs = vec![center.to_vec()];
        let mut fs = vec![f_center];
        for i in 0..n {
            if counted.exhausted() {
                return None;
            }
            let mut v = center.to_vec();
            let h = edges[i];
            v[i] = if center[i] + h <= bounds.upper()[i] {
                center[i] + h
            } else {
                center[i] - h
            };
            bounds.project(&mut v);
            fs.push(counted.eval(&v));
            xs.push(v);
        }
        Some((xs, fs))
    }
}

fn diameter(xs: &[Vec<f64>]) -> f64 {
    let best = &xs[0];
    xs[1..]
        .iter()
        .map(|x| {
            x.iter()
                .zip(best)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

fn sort_simplex(xs: &mut Vec<Vec<f64>>, fs: &mut Vec<f64>) {
    let mut idx: Vec<usize> = (0..fs.len()).collect();
    idx.sort_by(|&a, &b| fs[a].total_cmp(&fs[b]));
    *xs = idx.iter().map(|&i| xs[i].clone()).collect();
    *fs = idx.iter().map(|&i| fs[i]).collect();
}

fn affine_point(c: &[f64], towards: &[f64], t: f64, bounds: &Bounds) -> Vec<f64> {
    let mut p: Vec<f64> = c
        .iter()
        .zip(towards)
        .map(|(ci, wi)| ci + t * (wi - ci))
        .collect();
    bounds.project(&mut p);
    p
}

impl Subsolver for NelderMead {
    fn minimize(
        &self,
        g: &mut dyn FnMut(&[f64]) -> f64,
        x0: &[f64],
        f0: Option<f64>,
        bounds: &Bounds,
        budget: usize,
        tol: f64,
    ) -> InnerReport {
        let n = x0.len();
        debug_assert!(bounds.contains(x0), "start point outside the box");
        let degenerate = InnerReport {
            x_best: x0.to_vec(),
            f_best: f0.unwrap_or(f64::NAN),
            nevals: 0,
            converged: false,
        };
        if n == 0 || budget < n + 2 || bounds.dim() != n {
            return degenerate;
        }

        let mut counted = Counted {
            g,
            nevals: 0,
            budget,
            best_x: x0.to_vec(),
            best_f: f64::INFINITY,
        };
        let f_start = match f0 {
            Some(v) => {
                let v = if v.is_nan() { f64::INFINITY } else { v };
                counted.best_f = v;
                v
            }
            None => counted.eval(x0),
        };

        let edges = self.edges(bounds);
        let (alpha, beta, gamma, delta) = Self::coefficients(n);
        let mut restarts_left = self.restarts;
        let mut converged = false;

        let Some((mut xs, mut fs)) = Self::build_simplex(x0, f_start, &edges, bounds, &mut counted)
        else {
            return finish(counted, false);
        };

        'outer: loop {
            sort_simplex(&mut xs, &mut fs);
            if fs[n] - fs[0] <= 0.0 {
                // flat: every vertex has the same value
                converged = true;
                break;
            }
            if diameter(&xs) < tol {
                if restarts_left == 0 {
                    converged = true;
                    break;
                }
                restarts_left -= 1;
                let center = counted.best_x.clone();
                let fc = counted.best_f;
                match Self::build_simplex(&center, fc, &edges, bounds, &mut counted) {
                    Some((nx, nf)) => {
                        xs = nx;
                        fs = nf;
                        continue;
                    }
                    None => break,
                }
            }
            if counted.exhausted() {
                break;
            }

            let mut centroid = vec![0.0; n];
            for x in &xs[..n] {
                for (c, v) in centroid.iter_mut().zip(x) {
                    *c += v;
                }
            }
            centroid.iter_mut().for_each(|c| *c /= n as f64);

            let worst = xs[n].clone();
            let xr = affine_point(&centroid, &worst, -alpha, bounds);
            let fr = counted.eval(&xr);

            if fr < fs[0] {
                if counted.exhausted() {
                    xs[n] = xr;
                    fs[n] = fr;
                    break;
                }
                let xe = affine_point(&centroid, &xr, beta, bounds);
                let fe = counted.eval(&xe);
                if fe < fr {
                    xs[n] = xe;
                    fs[n] = fe;
                } else {
                    xs[n] = xr;
                    fs[n] = fr;
                }
                continue;
            }
            if fr < fs[n - 1] {
                xs[n] = xr;
                fs[n] = fr;
                continue;
            }
            if counted.exhausted() {
                break;
            }
            let accepted = if fr < fs[n] {
                let xc = affine_point(&centroid, &xr, gamma, bounds);
                let fc = counted.eval(&xc);
                if fc <= fr {
                    xs[n] = xc;
                    fs[n] = fc;
                    true
                } else {
                    false
                }
            } else {
                let xc = affine_point(&centroid, &worst, gamma, bounds);
                let fc = counted.eval(&xc);
                if fc < fs[n] {
                    xs[n] = xc;
                    fs[n] = fc;
                    true
                } else {
                    false
                }
            };
            if accepted {
                continue;
            }
            // shrink towards the best vertex
            let best = xs[0].clone();
            for i in 1..=n {
                if counted.exhausted() {
                    break 'outer;
                }
                let xi = affine_point(&best, &xs[i], delta, bounds);
                fs[i] = counted.eval(&xi);
                xs[i] = xi;
            }
        }

        finish(counted, converged)
    }
}

fn finish(counted: Counted, converged: bool) -> InnerReport {
    InnerReport {
        x_best: counted.best_x,
        f_best: counted.best_f,
        nevals: counted.nevals,
        converged,
    }
}
