//! The estimation core: a 108-dimensional unscented Kalman filter over
//! relative sensor positions, velocities, and accelerometer biases.
//!
//! Submodules split the concern: [`ukf`] holds the generic sigma-point
//! machinery, [`state`] the state layout and strapdown propagation,
//! [`pose_obs`] the pose oracle and its unscented push-through to relative
//! positions, [`measurement`] the 120-dimensional observation stack, and
//! [`session`] the per-subject stateful loop tying them together.

pub mod measurement;
pub mod pose_obs;
pub mod session;
pub mod state;
pub mod ukf;

pub use measurement::{
    assemble_measurement, measurement_model, MeasurementBundle, PoseObs, RangeObs, N_MEAS,
};
pub use pose_obs::{
    decode_pose, encode_pose, pose_oracle, pose_to_relative_positions, OutlierPolicy,
    PoseOracleSpec, PoseSample, PoseUtConfig, N_POSE_PARAMS,
};
pub use session::{FusionMode, Session, SessionConfig, StepInput, StepOutput};
pub use state::{
    bias_index, initial_covariance, initial_state, pos_index, process_noise, propagate_state,
    state_biases, state_distances, state_positions, state_velocities, vel_index,
    ProcessNoiseSpec, N_STATE,
};
pub use ukf::{sigma_points, ukf_propagate, ukf_update, unscented_transform, UtParams, UtWeights};

use crate::geometry::GeometryError;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("innovation covariance is singular even after jitter")]
    SingularInnovation,
    #[error("invalid fusion input: {0}")]
    BadInput(String),
}
