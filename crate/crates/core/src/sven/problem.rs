//! Manning-coefficient estimation as a residual problem.

use std::io::{BufRead, Write};

use super::channel::{simulate, simulate_with, true_manning, ChannelSpec, FlowState, ManningField};
use super::observations::{sample_observations, Observation, ObservationSet, AREA};
use crate::error::{Error, Result};
use crate::problem::{Residual, ResidualProblem};
use crate::rng::{Purpose, RngStreams};

/// Residual value used for every component when the simulation fails.
pub const FAILURE_RESIDUAL: f64 = 1e6;

/// Default number of time steps between future observation snapshots.
pub const DEFAULT_FUTURE_STRIDE: usize = 100;

/// Prediction horizon (s).
pub const PREDICTION_HORIZON: f64 = 3600.0;

/// Acceptability threshold on the relative prediction misfit.
pub const ACCEPTABLE_ETA: f64 = 1e-4;

fn observed(state: &FlowState, o: &Observation) -> f64 {
    if o.k == AREA {
        state.area[o.j]
    } else {
        state.flow[o.j] / state.area[o.j]
    }
}

/// Simulated-minus-observed values on an observation set, one simulation per
/// evaluation.
#[derive(Debug, Clone)]
pub struct SvenResidual {
    spec: ChannelSpec,
    obs: ObservationSet,
}

impl SvenResidual {
    pub fn new(obs: ObservationSet, spec: ChannelSpec) -> Result<Self> {
        spec.validate()?;
        if obs.is_empty() {
            return Err(Error::EmptyObservations);
        }
        if obs.n_x != spec.n_x {
            return Err(Error::DimensionMismatch {
                expected: spec.n_x,
                got: obs.n_x,
            });
        }
        if obs.dt != spec.dt || obs.dx != spec.dx {
            return Err(Error::InvalidConfig(format!(
                "observation grid (dt {}, dx {}) differs from channel (dt {}, dx {})",
                obs.dt, obs.dx, spec.dt, spec.dx
            )));
        }
        Ok(Self { spec, obs })
    }

    pub fn spec(&self) -> &ChannelSpec {
        &self.spec
    }

    pub fn observations(&self) -> &ObservationSet {
        &self.obs
    }
}

impl Residual for SvenResidual {
    fn n(&self) -> usize {
        self.spec.n_points()
    }

    fn m(&self) -> usize {
        self.obs.len()
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let entries = self.obs.entries();
        let last = entries.last().map_or(0, |e| e.i);
        let mut p = 0;
        let run = simulate_with(x, &self.spec, last, |i, state| {
            while p < entries.len() && entries[p].i == i {
                out[p] = observed(state, &entries[p]) - entries[p].value;
                p += 1;
            }
        });
        if run.is_err() || out.iter().any(|v| !v.is_finite()) {
            out.fill(FAILURE_RESIDUAL);
        }
    }
}

/// Wraps the observations in a counted residual problem with `n_x + 1` unknowns.
pub fn make_problem(obs: ObservationSet, spec: ChannelSpec) -> Result<ResidualProblem<SvenResidual>> {
    Ok(ResidualProblem::new(SvenResidual::new(obs, spec)?))
}

/// Stopping target on the `‖F‖²` scale: `ε Σ (y^obs)²`.
pub fn ssq_target(obs: &ObservationSet, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidConfig(format!("epsilon {epsilon} must be positive")));
    }
    Ok(epsilon * obs.sum_sq())
}

/// A synthetic estimation instance: channel, generating field and observations.
#[derive(Debug, Clone)]
pub struct Instance {
    pub spec: ChannelSpec,
    pub truth: ManningField,
    pub obs: ObservationSet,
}

impl Instance {
    /// Draws the true field, simulates `n_t` steps and masks the result.
    pub fn generate(spec: ChannelSpec, n_t: usize, fraction: f64, seed: u64) -> Result<Self> {
        spec.validate()?;
        if n_t == 0 {
            return Err(Error::InvalidConfig("n_t must be at least 1".into()));
        }
        let streams = RngStreams::new(seed);
        let truth = true_manning(&spec, &mut streams.stream(Purpose::ManningPerturb));
        let traj = simulate(truth.values(), &spec, n_t)?;
        let obs = sample_observations(&traj, spec.dx, fraction, seed, &mut streams.stream(Purpose::ObsMask))?;
        Ok(Self { spec, truth, obs })
    }

    pub fn problem(&self) -> Result<ResidualProblem<SvenResidual>> {
        make_problem(self.obs.clone(), self.spec.clone())
    }

    pub fn ssq_target(&self, epsilon: f64) -> Result<f64> {
        ssq_target(&self.obs, epsilon)
    }

    /// Future observations from the generating field at every `stride`-th step
    /// after the observed window, up to the prediction horizon.
    pub fn future_observations(&self, stride: usize) -> Result<ObservationSet> {
        let n_pred = (PREDICTION_HORIZON / self.spec.dt).round() as usize;
        future_observations(&self.truth, &self.spec, self.obs.n_t, n_pred, stride)
    }
}

/// All points and both observables at time indices `n_t + stride, n_t + 2 stride, … ≤ n_pred`.
pub fn future_observations(
    truth: &ManningField,
    spec: &ChannelSpec,
    n_t: usize,
    n_pred: usize,
    stride: usize,
) -> Result<ObservationSet> {
    if stride == 0 || n_pred <= n_t {
        return Err(Error::InvalidConfig("future window is empty".into()));
    }
    let mut entries = Vec::new();
    simulate_with(truth.values(), spec, n_pred, |i, state| {
        if i > n_t && (i - n_t).is_multiple_of(stride) {
            for j in 0..state.len() {
                for k in [AREA, super::observations::VELOCITY] {
                    let o = Observation { i, j, k, value: 0.0 };
                    entries.push(Observation {
                        value: observed(state, &o),
                        ..o
                    });
                }
            }
        }
    })?;
    ObservationSet::new(spec.n_x, n_pred, spec.dt, spec.dx, 0, entries)
}

/// Relative misfit over the training and future observations,
/// `Σ (y(ξ) − y^obs)² / Σ (y^obs)²`, from one long simulation. A failed
/// simulation gives `+∞`.
pub fn prediction_error(xi: &[f64], train: &ObservationSet, future: &ObservationSet, spec: &ChannelSpec) -> f64 {
    let mut all: Vec<Observation> = train.entries().iter().chain(future.entries()).copied().collect();
    all.sort_by_key(|o| o.i);
    let last = all.last().map_or(0, |o| o.i);
    let (mut num, mut p) = (0.0, 0);
    let run = simulate_with(xi, spec, last, |i, state| {
        while p < all.len() && all[p].i == i {
            let r = observed(state, &all[p]) - all[p].value;
            num += r * r;
            p += 1;
        }
    });
    let den = train.sum_sq() + future.sum_sq();
    match run {
        Ok(()) if num.is_finite() => num / den,
        _ => f64::INFINITY,
    }
}

pub fn write_truth<W: Write>(truth: &ManningField, mut w: W) -> Result<()> {
    writeln!(w, "# {}", truth.values().len())?;
    for v in truth.values() {
        writeln!(w, "{v:.16e}")?;
    }
    Ok(())
}

pub fn read_truth<R: BufRead>(r: R) -> Result<ManningField> {
    let mut values = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        values.push(t.parse::<f64>().map_err(|_| Error::Parse {
            line: idx + 1,
            msg: format!("bad value '{t}'"),
        })?);
    }
    ManningField::new(values)
}
