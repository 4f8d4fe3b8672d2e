//! Relative-kinematics state estimation for a body-worn sensor network.
//!
//! Six inertial nodes (pelvis, head, forearms, lower legs) are strapped to a
//! capsule body model. The crate synthesizes what such a network would
//! measure: accelerations by finite differences, inter-node distances by
//! asymmetric double-sided two-way ranging, and distance noise driven by
//! line-of-sight conditions through the body mesh. An unscented Kalman
//! filter then estimates relative positions, relative velocities, and
//! per-node accelerometer biases, optionally fusing a noisy joint-rotation
//! observer through an unscented transform.
//!
//! Modules:
//! - [`geometry`]: rotations, 6D rotation encoding, jitter-tolerant Cholesky
//! - [`body`]: skeleton, shape scaling, forward kinematics, capsule mesh,
//!   anthropometrics and shape estimation
//! - [`imu`]: acceleration synthesis, noise corruption, mounting calibration
//! - [`uwb`]: broadcast ranging schedule, clock models, distance recovery
//! - [`los`]: segment/mesh intersection and the distance error model
//! - [`fusion`]: the filter itself
//! - [`harness`]: trajectories, experiment pipeline, metrics, file formats

pub mod body;
pub mod cli;
pub mod fusion;
pub mod geometry;
pub mod harness;
pub mod imu;
pub mod los;
pub mod uwb;
