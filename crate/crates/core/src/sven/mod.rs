//! One-dimensional Saint-Venant channel model and the Manning-coefficient
//! estimation problem built on synthetic observations of it.

mod channel;
mod observations;
mod problem;

pub use channel::{
    inflow, initial_state, simulate, simulate_with, step, true_manning, write_trajectory_csv, zhat, ChannelSpec,
    FlowState, Inflow, ManningField, Trajectory, AREA_FLOOR, MANNING_BASE, MANNING_PERTURBATION,
};
pub use observations::{sample_observations, Observation, ObservationSet, AREA, VELOCITY};
pub use problem::{
    future_observations, make_problem, prediction_error, read_truth, ssq_target, write_truth, Instance,
    SvenResidual, ACCEPTABLE_ETA, DEFAULT_FUTURE_STRIDE, FAILURE_RESIDUAL, PREDICTION_HORIZON,
};
