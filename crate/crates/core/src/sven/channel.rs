//! Explicit diffusion-blended Lax-Friedrichs solver for the 1-D Saint-Venant
//! equations in a rectangular channel.
//!
//! ```text
//! A_t + Q_x = 0
//! Q_t + (Q V)_x + g A ẑ + ξ P V |V| / 8 = 0,   ẑ = z_x / (1 + z_x²),  z_x = h_x + (z_b)_x
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest wetted area the scheme allows.
pub const AREA_FLOOR: f64 = 1e-6;

const Q_BASE: f64 = 8.245;
const Q_PEAK: f64 = 200.0;
const T_PEAK: f64 = 1200.0;
const T_END: f64 = 3600.0;

/// Reference Manning coefficient of the synthetic channel.
pub const MANNING_BASE: f64 = 0.0366;
/// Relative amplitude of the random perturbation of the true field.
pub const MANNING_PERTURBATION: f64 = 0.01;

/// Upstream discharge: rises linearly from 8.245 to 200 m³/s over 1200 s,
/// falls back to 8.245 at 3600 s and stays there.
pub fn inflow(t: f64) -> f64 {
    if t <= T_PEAK {
        Q_BASE + (Q_PEAK - Q_BASE) * t / T_PEAK
    } else if t <= T_END {
        Q_PEAK - (Q_PEAK - Q_BASE) * (t - T_PEAK) / (T_END - T_PEAK)
    } else {
        Q_BASE
    }
}

/// Left boundary discharge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Inflow {
    /// The flood hydrograph of [`inflow`].
    Hydrograph,
    /// A constant discharge in m³/s.
    Constant(f64),
}

impl Inflow {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Inflow::Hydrograph => inflow(t),
            Inflow::Constant(q) => q,
        }
    }
}

/// Channel geometry and discretization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    /// Channel width (m).
    pub width: f64,
    /// Bed slope `(z_b)_x`.
    pub bed_slope: f64,
    pub x_min: f64,
    pub dx: f64,
    /// Grid points are `j = 0..=n_x`.
    pub n_x: usize,
    pub g: f64,
    /// Artificial diffusion coefficient; 1 gives classical Lax-Friedrichs.
    pub theta: f64,
    pub dt: f64,
    pub initial_depth: f64,
    pub initial_flow: f64,
    pub inflow: Inflow,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self {
            width: 5.0,
            bed_slope: 0.001,
            x_min: 0.0,
            dx: 6.0,
            n_x: 100,
            g: 9.8,
            theta: 0.9,
            dt: 0.1,
            initial_depth: 1.2,
            initial_flow: Q_BASE,
            inflow: Inflow::Hydrograph,
        }
    }
}

impl ChannelSpec {
    pub fn with_nx(n_x: usize) -> Self {
        Self {
            n_x,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_x < 2 {
            return bad("n_x must be at least 2");
        }
        if !(self.width > 0.0 && self.dx > 0.0 && self.dt > 0.0 && self.g > 0.0) {
            return bad("width, dx, dt and g must be positive");
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return bad("theta must lie in (0, 1]");
        }
        if !(self.initial_depth > 0.0) {
            return bad("initial depth must be positive");
        }
        Ok(())
    }

    pub fn n_points(&self) -> usize {
        self.n_x + 1
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx
    }

    /// Time of step index `i` (`t_min = 0`).
    pub fn t(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    /// Courant number `(|V| + √(g h)) Δt / Δx` at one grid point.
    pub fn courant(&self, area: f64, flow: f64) -> f64 {
        let h = area / self.width;
        ((flow / area).abs() + (self.g * h).sqrt()) * self.dt / self.dx
    }
}

/// Wetted areas and discharges at every grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub area: Vec<f64>,
    pub flow: Vec<f64>,
}

impl FlowState {
    pub fn len(&self) -> usize {
        self.area.len()
    }

    pub fn is_empty(&self) -> bool {
        self.area.is_empty()
    }

    pub fn depth(&self, width: f64) -> Vec<f64> {
        self.area.iter().map(|a| a / width).collect()
    }

    pub fn velocity(&self) -> Vec<f64> {
        self.area.iter().zip(&self.flow).map(|(a, q)| q / a).collect()
    }

    /// Wetted perimeter `b + 2h` of a rectangular section.
    pub fn perimeter(&self, width: f64) -> Vec<f64> {
        self.area.iter().map(|a| width + 2.0 * a / width).collect()
    }

    /// Largest Courant number over the grid and where it occurs.
    pub fn max_courant(&self, spec: &ChannelSpec) -> (f64, usize) {
        self.area
            .iter()
            .zip(&self.flow)
            .enumerate()
            .map(|(j, (&a, &q))| (spec.courant(a, q), j))
            .fold((f64::NEG_INFINITY, 0), |acc, c| if c.0 > acc.0 || c.0.is_nan() { c } else { acc })
    }
}

/// Manning coefficients, one per grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManningField(pub Vec<f64>);

impl ManningField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(j) = values.iter().position(|v| !(*v >= 0.0)) {
            return Err(Error::Domain(format!("Manning coefficient {} at {j} is negative", values[j])));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Uniform depth and discharge from the spec.
pub fn initial_state(spec: &ChannelSpec) -> FlowState {
    let n = spec.n_points();
    FlowState {
        area: vec![spec.initial_depth * spec.width; n],
        flow: vec![spec.initial_flow; n],
    }
}

/// `ẑ = z_x / (1 + z_x²)` with `z_x = h_x + (z_b)_x`; `h_x` by central
/// differences inside and one-sided differences at the ends.
pub fn zhat(depth: &[f64], spec: &ChannelSpec) -> Vec<f64> {
    let n = depth.len();
    assert!(n >= 3, "zhat needs at least three grid points");
    let s = |zx: f64| zx / (1.0 + zx * zx);
    (0..n)
        .map(|j| {
            let hx = if j == 0 {
                (depth[1] - depth[0]) / spec.dx
            } else if j == n - 1 {
                (depth[n - 1] - depth[n - 2]) / spec.dx
            } else {
                (depth[j + 1] - depth[j - 1]) / (2.0 * spec.dx)
            };
            s(hx + spec.bed_slope)
        })
        .collect()
}

/// Advances `state` from time `t` to `t + dt`.
pub fn step(state: &FlowState, xi: &[f64], spec: &ChannelSpec, t: f64) -> Result<FlowState> {
    let n = state.len();
    if xi.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: xi.len(),
        });
    }
    let (cfl, jc) = state.max_courant(spec);
    if !(cfl < 1.0) {
        return Err(Error::Simulation {
            t,
            j: jc,
            reason: format!("Courant number {cfl} is not below 1"),
        });
    }

    let (a, q) = (&state.area, &state.flow);
    let v = state.velocity();
    let depth = state.depth(spec.width);
    let zh = zhat(&depth, spec);
    let c = spec.dt / (2.0 * spec.dx);
    let d = 0.5 * spec.theta;

    let mut area = vec![0.0; n];
    let mut flow = vec![0.0; n];
    for j in 1..n - 1 {
        area[j] = a[j] - c * (q[j + 1] - q[j - 1]) + d * (a[j + 1] - 2.0 * a[j] + a[j - 1]);
        let p = spec.width + 2.0 * depth[j];
        let source = spec.g * a[j] * zh[j] + xi[j] * p * v[j] * v[j].abs() / 8.0;
        flow[j] = q[j] - c * (q[j + 1] * v[j + 1] - q[j - 1] * v[j - 1])
            + d * (q[j + 1] - 2.0 * q[j] + q[j - 1])
            - spec.dt * source;
    }
    area[0] = 2.0 * area[1] - area[2];
    flow[0] = spec.inflow.at(t + spec.dt);
    area[n - 1] = 2.0 * area[n - 2] - area[n - 3];
    flow[n - 1] = 2.0 * flow[n - 2] - flow[n - 3];

    for (j, (aj, qj)) in area.iter_mut().zip(&flow).enumerate() {
        if !aj.is_finite() || !qj.is_finite() {
            return Err(Error::Simulation {
                t: t + spec.dt,
                j,
                reason: "non-finite state".into(),
            });
        }
        *aj = aj.max(AREA_FLOOR);
    }
    Ok(FlowState { area, flow })
}

/// Runs `steps` steps from the initial state, handing each new state and its
/// step index (`1..=steps`) to `visit`.
pub fn simulate_with<F>(xi: &[f64], spec: &ChannelSpec, steps: usize, mut visit: F) -> Result<()>
where
    F: FnMut(usize, &FlowState),
{
    spec.validate()?;
    let mut state = initial_state(spec);
    for i in 1..=steps {
        state = step(&state, xi, spec, spec.t(i - 1))?;
        visit(i, &state);
    }
    Ok(())
}

/// Areas and velocities at time indices `1..=steps`; the initial state is
/// not included.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub area: Vec<Vec<f64>>,
    pub velocity: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.area.len()
    }

    /// Observable `k` (1 = area, 2 = velocity) at time index `i ≥ 1` and point `j`.
    pub fn value(&self, i: usize, j: usize, k: u8) -> f64 {
        match k {
            1 => self.area[i - 1][j],
            _ => self.velocity[i - 1][j],
        }
    }
}

pub fn simulate(xi: &[f64], spec: &ChannelSpec, steps: usize) -> Result<Trajectory> {
    let mut area = Vec::with_capacity(steps);
    let mut velocity = Vec::with_capacity(steps);
    simulate_with(xi, spec, steps, |_, s| {
        area.push(s.area.clone());
        velocity.push(s.velocity());
    })?;
    Ok(Trajectory {
        dt: spec.dt,
        area,
        velocity,
    })
}

/// `ξ_j = 0.0366 (1 + 0.01 u_j)` with `u_j ~ U[0, 1]`.
pub fn true_manning<G: Rng + ?Sized>(spec: &ChannelSpec, rng: &mut G) -> ManningField {
    ManningField(
        (0..spec.n_points())
            .map(|_| MANNING_BASE * (1.0 + MANNING_PERTURBATION * rng.random::<f64>()))
            .collect(),
    )
}

/// Writes `t,x,A,V` rows for every stored time and grid point.
pub fn write_trajectory_csv<W: std::io::Write>(traj: &Trajectory, spec: &ChannelSpec, mut w: W) -> Result<()> {
    writeln!(w, "t,x,A,V")?;
    for i in 1..=traj.steps() {
        for j in 0..traj.area[i - 1].len() {
            writeln!(
                w,
                "{},{},{:.16e},{:.16e}",
                spec.t(i),
                spec.x(j),
                traj.value(i, j, 1),
                traj.value(i, j, 2)
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, RngStreams};

    #[test]
    fn inflow_hydrograph() {
        assert_eq!(inflow(0.0), 8.245);
        assert_eq!(inflow(1200.0), 200.0);
        assert!((inflow(2400.0) - 104.1225).abs() < 1e-12);
        assert!((inflow(3600.0) - 8.245).abs() < 1e-12);
        assert_eq!(inflow(5000.0), 8.245);
        assert!((inflow(600.0) - (8.245 + 200.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn initial_state_values() {
        let spec = ChannelSpec::default();
        let s = initial_state(&spec);
        assert_eq!(s.len(), 101);
        assert!(s.area.iter().all(|&a| a == 6.0));
        assert!(s.velocity().iter().all(|v| (v - 1.3742).abs() < 1e-4));
        assert!(s.perimeter(spec.width).iter().all(|p| (p - 7.4).abs() < 1e-14));
    }

    #[test]
    fn zhat_examples() {
        let mut spec = ChannelSpec {
            bed_slope: 0.0,
            ..Default::default()
        };
        assert!(zhat(&[1.2; 5], &spec).iter().all(|&z| z == 0.0));
        spec.bed_slope = 0.001;
        assert!(zhat(&[1.2; 5], &spec).iter().all(|&z| z == 0.001 / (1.0 + 1e-6)));
        let h: Vec<f64> = (0..6).map(|j| 1.0 + 0.01 * j as f64).collect();
        let zx = 0.01 / 6.0 + 0.001;
        for (j, z) in zhat(&h, &spec).into_iter().enumerate() {
            assert!((z - zx / (1.0 + zx * zx)).abs() < 1e-15, "j = {j}");
        }
    }

    #[test]
    fn uniform_state_is_fixed_point() {
        for theta in [0.3, 0.9, 1.0] {
            let spec = ChannelSpec {
                bed_slope: 0.0,
                theta,
                n_x: 40,
                inflow: Inflow::Constant(8.245),
                ..Default::default()
            };
            let s0 = initial_state(&spec);
            let s1 = step(&s0, &vec![0.0; 41], &spec, 0.0).unwrap();
            for j in 0..41 {
                assert!((s1.area[j] - s0.area[j]).abs() <= 1e-13 * s0.area[j]);
                assert!((s1.flow[j] - s0.flow[j]).abs() <= 1e-13 * s0.flow[j]);
            }
        }
    }

    /// Σ_{j=1}^{N-1} ΔA_j telescopes to boundary terms only.
    fn mass_defect(s0: &FlowState, s1: &FlowState, spec: &ChannelSpec) -> f64 {
        let n = s0.len() - 1;
        let (a, q) = (&s0.area, &s0.flow);
        let lhs: f64 = (1..n).map(|j| s1.area[j] - a[j]).sum();
        let c = spec.dt / (2.0 * spec.dx);
        let rhs = -c * (q[n] + q[n - 1] - q[1] - q[0]) + 0.5 * spec.theta * (a[n] - a[n - 1] - a[1] + a[0]);
        (lhs - rhs).abs()
    }

    #[test]
    fn mass_telescoping() {
        let spec = ChannelSpec::with_nx(60);
        let mut rng = RngStreams::new(4).stream(Purpose::ManningPerturb);
        let xi = true_manning(&spec, &mut rng);
        let mut s = initial_state(&spec);
        // perturb to get a nontrivial profile
        for j in 0..s.len() {
            s.area[j] += 0.3 * (j as f64 * 0.37).sin();
            s.flow[j] += 2.0 * (j as f64 * 0.11).cos();
        }
        for i in 0..20 {
            let next = step(&s, xi.values(), &spec, spec.t(i)).unwrap();
            assert!(mass_defect(&s, &next, &spec) < 1e-12);
            s = next;
        }
    }

    #[test]
    fn courant_at_defaults() {
        let spec = ChannelSpec::default();
        let s = initial_state(&spec);
        let (c, _) = s.max_courant(&spec);
        let expected = (8.245 / 6.0 + (9.8f64 * 1.2).sqrt()) * 0.1 / 6.0;
        assert!((c - expected).abs() < 1e-15);
        assert!((c - 0.08).abs() < 0.005);
    }

    #[test]
    fn cfl_violation_is_reported() {
        let spec = ChannelSpec {
            dt: 10.0,
            ..Default::default()
        };
        let s = initial_state(&spec);
        match step(&s, &vec![0.0366; 101], &spec, 0.0) {
            Err(Error::Simulation { t, .. }) => assert_eq!(t, 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn short_run_stays_in_band() {
        let spec = ChannelSpec::default();
        let traj = simulate(&vec![0.0366; 101], &spec, 10).unwrap();
        assert_eq!(traj.steps(), 10);
        for i in 1..=10 {
            for j in 0..101 {
                let a = traj.value(i, j, 1);
                assert!(a > 0.0 && a <= 10.0 && traj.value(i, j, 2).is_finite());
            }
        }
        assert_eq!(simulate(&vec![0.0366; 101], &spec, 0).unwrap().steps(), 0);
    }

    #[test]
    fn friction_slows_flow() {
        let spec = ChannelSpec::with_nx(30);
        let lo = simulate(&vec![0.0366; 31], &spec, 20).unwrap();
        let hi = simulate(&vec![0.0732; 31], &spec, 20).unwrap();
        for j in 1..4 {
            assert!(hi.value(20, j, 2) < lo.value(20, j, 2), "j = {j}");
        }
    }

    #[test]
    fn full_flood_stays_stable() {
        let spec = ChannelSpec::with_nx(100);
        let xi = vec![0.0366; 101];
        let mut worst: f64 = 0.0;
        let mut min_area = f64::INFINITY;
        simulate_with(&xi, &spec, 36_000, |_, s| {
            worst = worst.max(s.max_courant(&spec).0);
            min_area = min_area.min(s.area.iter().cloned().fold(f64::INFINITY, f64::min));
        })
        .unwrap();
        assert!(worst < 1.0);
        assert!(min_area > AREA_FLOOR);
    }

    #[test]
    fn manning_field_bounds() {
        let spec = ChannelSpec::with_nx(500);
        let mut rng = RngStreams::new(1).stream(Purpose::ManningPerturb);
        let f = true_manning(&spec, &mut rng);
        assert!(f.values().iter().all(|&v| (0.0366..=0.036966).contains(&v)));
        let mut rng2 = RngStreams::new(1).stream(Purpose::ManningPerturb);
        assert_eq!(f, true_manning(&spec, &mut rng2));
        assert!(ManningField::new(vec![0.1, -0.1]).is_err());
    }

    #[test]
    fn manning_field_mean() {
        let spec = ChannelSpec::with_nx(100_000 - 1);
        let mut rng = RngStreams::new(2).stream(Purpose::ManningPerturb);
        let f = true_manning(&spec, &mut rng);
        let mean = f.values().iter().sum::<f64>() / f.values().len() as f64;
        assert!((mean / (0.0366 * 1.005) - 1.0).abs() < 1e-4);
    }
}
