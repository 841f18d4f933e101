use rand::Rng;

use super::{Proposal, ReducedObjective};
use crate::error::{Error, Result};
use crate::problem::{Residual, ResidualProblem};
use crate::subsolver::{Bounds, Subsolver};

/// Raw spline variables: ordinates `v_0..v_{κ+1}` and interior nodes
/// `p_1..p_κ`. The end nodes are fixed at 0 and 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineParams {
    pub values: Vec<f64>,
    pub nodes: Vec<f64>,
}

impl SplineParams {
    pub fn new(values: Vec<f64>, nodes: Vec<f64>) -> Result<Self> {
        if values.len() != nodes.len() + 2 {
            return Err(Error::DimensionMismatch {
                expected: nodes.len() + 2,
                got: values.len(),
            });
        }
        Ok(Self { values, nodes })
    }

    pub fn kappa(&self) -> usize {
        self.nodes.len()
    }

    /// Unpacks the reduced variable vector `(v_0..v_{κ+1}, p_1..p_κ)`.
    pub fn from_packed(z: &[f64]) -> Self {
        assert!(z.len() >= 2 && z.len().is_multiple_of(2), "packed length must be 2κ + 2");
        let kappa = (z.len() - 2) / 2;
        Self {
            values: z[..kappa + 2].to_vec(),
            nodes: z[kappa + 2..].to_vec(),
        }
    }

    pub fn packed(&self) -> Vec<f64> {
        let mut z = self.values.clone();
        z.extend_from_slice(&self.nodes);
        z
    }
}

/// Sorted, duplicate-free node list from `0` to `1` with its ordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalSpline {
    nodes: Vec<f64>,
    values: Vec<f64>,
}

impl CanonicalSpline {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Sorts the nodes and merges exactly equal positions, averaging their
/// ordinates. A group that contains an end node keeps the end position.
pub fn canonicalize(params: &SplineParams) -> CanonicalSpline {
    let kappa = params.kappa();
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(kappa + 2);
    pts.push((0.0, params.values[0]));
    for (p, v) in params.nodes.iter().zip(&params.values[1..=kappa]) {
        pts.push((*p, *v));
    }
    pts.push((1.0, params.values[kappa + 1]));
    // ordinates break ties so the group sums do not depend on input order
    pts.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("spline nodes must not be NaN")
            .then(a.1.total_cmp(&b.1))
    });

    let mut nodes = Vec::with_capacity(pts.len());
    let mut values = Vec::with_capacity(pts.len());
    let mut i = 0;
    while i < pts.len() {
        let mut j = i + 1;
        while j < pts.len() && pts[j].0 == pts[i].0 {
            j += 1;
        }
        let group = &pts[i..j];
        let sum: f64 = group.iter().map(|p| p.1).sum();
        let pos = if pts[i].0 == 0.0 {
            0.0
        } else if pts[i].0 == 1.0 {
            1.0
        } else {
            pts[i].0
        };
        nodes.push(pos);
        values.push(sum / group.len() as f64);
        i = j;
    }
    CanonicalSpline { nodes, values }
}

/// Piecewise-linear interpolation of the canonical spline at `t ∈ [0, 1]`.
pub fn eval_spline(spline: &CanonicalSpline, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("spline argument {t} outside [0, 1]")));
    }
    Ok(eval_unchecked(spline, t))
}

fn eval_unchecked(spline: &CanonicalSpline, t: f64) -> f64 {
    let nodes = &spline.nodes;
    // index of the last node <= t
    let j = nodes.partition_point(|&p| p <= t).saturating_sub(1);
    if nodes[j] == t || j + 1 == nodes.len() {
        return spline.values[j];
    }
    let (p0, p1) = (nodes[j], nodes[j + 1]);
    let (v0, v1) = (spline.values[j], spline.values[j + 1]);
    v0 + (v1 - v0) * (t - p0) / (p1 - p0)
}

/// Samples the spline on the uniform grid `i / (n − 1)`, `i = 0..n`.
pub fn spline_displacement(spline: &CanonicalSpline, n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Domain(format!("spline grid needs n >= 2, got {n}")));
    }
    let denom = (n - 1) as f64;
    let mut d = Vec::with_capacity(n);
    // walk the segments once instead of searching per grid point
    let nodes = &spline.nodes;
    let mut seg = 0;
    for i in 0..n {
        let t = i as f64 / denom;
        while seg + 1 < nodes.len() && nodes[seg + 1] <= t {
            seg += 1;
        }
        let v = if nodes[seg] == t || seg + 1 == nodes.len() {
            spline.values[seg]
        } else {
            let (p0, p1) = (nodes[seg], nodes[seg + 1]);
            let (v0, v1) = (spline.values[seg], spline.values[seg + 1]);
            v0 + (v1 - v0) * (t - p0) / (p1 - p0)
        };
        d.push(v);
    }
    Ok(d)
}

/// Minimizes `‖F(x_k + d(v, p))‖²` over `p ∈ [0, 1]^κ`, `v ∈ [−v_box, v_box]^{κ+2}`,
/// starting from `v = 0` and uniformly random nodes.
#[allow(clippy::too_many_arguments)]
pub fn propose_spline<R: Residual, G: Rng + ?Sized>(
    problem: &mut ResidualProblem<R>,
    x_k: &[f64],
    ssq_k: f64,
    kappa: usize,
    subsolver: &dyn Subsolver,
    budget: usize,
    v_box: f64,
    tol: f64,
    rng: &mut G,
) -> Result<Proposal> {
    let n = x_k.len();
    if n < 2 {
        return Err(Error::Domain(format!("spline reduction needs n >= 2, got {n}")));
    }
    let nodes: Vec<f64> = (0..kappa).map(|_| rng.random_range(0.0..=1.0)).collect();
    let start = SplineParams {
        values: vec![0.0; kappa + 2],
        nodes,
    };
    let mut lower = vec![-v_box; kappa + 2];
    lower.extend(std::iter::repeat_n(0.0, kappa));
    let mut upper = vec![v_box; kappa + 2];
    upper.extend(std::iter::repeat_n(1.0, kappa));
    let bounds = Bounds::new(lower, upper)?;

    let budget = budget.min(problem.remaining());
    let mut reduced = ReducedObjective::new(problem, ssq_k);
    let mut g = |z: &[f64]| {
        let spline = canonicalize(&SplineParams::from_packed(z));
        let d = spline_displacement(&spline, n).expect("n >= 2");
        let x: Vec<f64> = x_k.iter().zip(&d).map(|(a, b)| a + b).collect();
        reduced.eval_at(x)
    };
    subsolver.minimize(&mut g, &start.packed(), Some(ssq_k), &bounds, budget, tol);
    Ok(reduced.into_proposal(x_k))
}
