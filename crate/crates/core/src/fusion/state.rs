//! State layout and strapdown propagation.
//!
//! The 108-vector stacks, in order: 15 relative positions (pair-major,
//! xyz), 15 relative velocities, and 6 per-node accelerometer biases. All
//! pairs are lexicographic `x < y` over the node indices; nothing ever
//! stores a reversed pair.

use crate::body::{
    forward_kinematics, relative_sensor_positions, BodyShape, BodyTemplate, Pose, N_PAIRS,
    N_SENSORS, SENSOR_PAIRS,
};
use crate::geometry::Vec3;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const N_STATE: usize = 108;
const VEL_BASE: usize = 3 * N_PAIRS;
const BIAS_BASE: usize = 6 * N_PAIRS;

pub fn pos_index(pair: usize, axis: usize) -> usize {
    debug_assert!(pair < N_PAIRS && axis < 3);
    3 * pair + axis
}

pub fn vel_index(pair: usize, axis: usize) -> usize {
    debug_assert!(pair < N_PAIRS && axis < 3);
    VEL_BASE + 3 * pair + axis
}

pub fn bias_index(node: usize, axis: usize) -> usize {
    debug_assert!(node < N_SENSORS && axis < 3);
    BIAS_BASE + 3 * node + axis
}

/// Process-noise magnitudes; defaults mirror the accelerometer error model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProcessNoiseSpec {
    /// White acceleration noise std per node per axis, m/s^2.
    pub sigma_accel: f64,
    /// Bias random-walk increment std per step, m/s^2.
    pub sigma_bias_walk: f64,
}

impl Default for ProcessNoiseSpec {
    fn default() -> Self {
        ProcessNoiseSpec { sigma_accel: 0.04, sigma_bias_walk: 0.002 }
    }
}

/// T-pose relative positions, zero velocities, zero biases.
pub fn initial_state(template: &BodyTemplate, shape: &BodyShape) -> DVector<f64> {
    let fk = forward_kinematics(template, shape, &Pose::t_pose());
    let rel = relative_sensor_positions(&fk);
    let mut x = DVector::zeros(N_STATE);
    for (k, p) in rel.iter().enumerate() {
        for axis in 0..3 {
            x[pos_index(k, axis)] = p[axis];
        }
    }
    x
}

/// Diagonal prior: 0.05 m on positions, 0.1 m/s on velocities, 0.05 m/s^2
/// on biases.
pub fn initial_covariance() -> DMatrix<f64> {
    let mut p = DMatrix::zeros(N_STATE, N_STATE);
    for k in 0..N_PAIRS {
        for axis in 0..3 {
            p[(pos_index(k, axis), pos_index(k, axis))] = 0.05 * 0.05;
            p[(vel_index(k, axis), vel_index(k, axis))] = 0.1 * 0.1;
        }
    }
    for node in 0..N_SENSORS {
        for axis in 0..3 {
            p[(bias_index(node, axis), bias_index(node, axis))] = 0.05 * 0.05;
        }
    }
    p
}

/// One strapdown step driven by the previous frame's calibrated
/// accelerations. Per pair `(x, y)` with `da = a_y - a_x` and
/// `db = b_y - b_x`:
///
/// ```text
/// p' = p + v dt + (da - db) dt^2 / 2
/// v' = v + (da - db) dt
/// b' = b
/// ```
pub fn propagate_state(x: &DVector<f64>, accel: &[Vec3; N_SENSORS], dt: f64) -> DVector<f64> {
    let mut out = x.clone();
    let half_dt2 = 0.5 * dt * dt;
    for (k, &(nx, ny)) in SENSOR_PAIRS.iter().enumerate() {
        for axis in 0..3 {
            let da = accel[ny][axis] - accel[nx][axis];
            let db = x[bias_index(ny, axis)] - x[bias_index(nx, axis)];
            let eff = da - db;
            let pi = pos_index(k, axis);
            let vi = vel_index(k, axis);
            out[pi] = x[pi] + x[vi] * dt + eff * half_dt2;
            out[vi] = x[vi] + eff * dt;
        }
    }
    out
}

/// Discrete white-noise-acceleration blocks, doubled because each pair
/// differences two independent accelerometers:
///
/// ```text
/// Q_pp = 2 sigma^2 dt^4 / 4    Q_pv = 2 sigma^2 dt^3 / 2    Q_vv = 2 sigma^2 dt^2
/// ```
///
/// plus an independent `sigma_walk^2` per bias component. The per-axis
/// position/velocity block is exactly singular (rank one), which the
/// semidefinite-tolerant factorization downstream accepts. Cross-pair
/// correlation from shared nodes is deliberately ignored.
pub fn process_noise(spec: &ProcessNoiseSpec, dt: f64) -> DMatrix<f64> {
    assert!(dt > 0.0, "dt must be positive");
    let s2 = 2.0 * spec.sigma_accel * spec.sigma_accel;
    let qpp = s2 * dt.powi(4) / 4.0;
    let qpv = s2 * dt.powi(3) / 2.0;
    let qvv = s2 * dt * dt;
    let qb = spec.sigma_bias_walk * spec.sigma_bias_walk;
    let mut q = DMatrix::zeros(N_STATE, N_STATE);
    for k in 0..N_PAIRS {
        for axis in 0..3 {
            let pi = pos_index(k, axis);
            let vi = vel_index(k, axis);
            q[(pi, pi)] = qpp;
            q[(pi, vi)] = qpv;
            q[(vi, pi)] = qpv;
            q[(vi, vi)] = qvv;
        }
    }
    for node in 0..N_SENSORS {
        for axis in 0..3 {
            q[(bias_index(node, axis), bias_index(node, axis))] = qb;
        }
    }
    q
}

pub fn state_positions(x: &DVector<f64>) -> [Vec3; N_PAIRS] {
    let mut out = [Vec3::zeros(); N_PAIRS];
    for (k, p) in out.iter_mut().enumerate() {
        *p = Vec3::new(x[pos_index(k, 0)], x[pos_index(k, 1)], x[pos_index(k, 2)]);
    }
    out
}

pub fn state_velocities(x: &DVector<f64>) -> [Vec3; N_PAIRS] {
    let mut out = [Vec3::zeros(); N_PAIRS];
    for (k, v) in out.iter_mut().enumerate() {
        *v = Vec3::new(x[vel_index(k, 0)], x[vel_index(k, 1)], x[vel_index(k, 2)]);
    }
    out
}

pub fn state_biases(x: &DVector<f64>) -> [Vec3; N_SENSORS] {
    let mut out = [Vec3::zeros(); N_SENSORS];
    for (node, b) in out.iter_mut().enumerate() {
        *b = Vec3::new(x[bias_index(node, 0)], x[bias_index(node, 1)], x[bias_index(node, 2)]);
    }
    out
}

pub fn state_distances(x: &DVector<f64>) -> [f64; N_PAIRS] {
    let mut out = [0.0; N_PAIRS];
    for (k, d) in out.iter_mut().enumerate() {
        *d = Vec3::new(x[pos_index(k, 0)], x[pos_index(k, 1)], x[pos_index(k, 2)]).norm();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{default_template, pair_index};
    use crate::geometry::semidefinite_cholesky;

    #[test]
    fn index_helpers_partition_the_state() {
        let mut seen = vec![false; N_STATE];
        for k in 0..N_PAIRS {
            for axis in 0..3 {
                seen[pos_index(k, axis)] = true;
                seen[vel_index(k, axis)] = true;
            }
        }
        for node in 0..N_SENSORS {
            for axis in 0..3 {
                seen[bias_index(node, axis)] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(pos_index(0, 0), 0);
        assert_eq!(vel_index(0, 0), 45);
        assert_eq!(bias_index(0, 0), 90);
        assert_eq!(bias_index(5, 2), 107);
    }

    #[test]
    fn initial_state_matches_tpose_geometry() {
        let template = default_template();
        let shape = BodyShape::unit();
        let x = initial_state(template, &shape);
        let fk = forward_kinematics(template, &shape, &Pose::t_pose());
        let rel = relative_sensor_positions(&fk);
        for (k, p) in rel.iter().enumerate() {
            for axis in 0..3 {
                assert_eq!(x[pos_index(k, axis)], p[axis]);
            }
        }
        for i in VEL_BASE..N_STATE {
            assert_eq!(x[i], 0.0);
        }
    }

    #[test]
    fn initial_covariance_is_the_documented_diagonal() {
        let p = initial_covariance();
        assert_eq!(p[(0, 0)], 0.05 * 0.05);
        assert_eq!(p[(50, 50)], 0.1 * 0.1);
        assert_eq!(p[(100, 100)], 0.05 * 0.05);
        for i in 0..N_STATE {
            for j in 0..N_STATE {
                if i != j {
                    assert_eq!(p[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn pure_drift_advances_positions() {
        let dt = 1.0 / 60.0;
        let pair = pair_index(1, 2).unwrap();
        let mut x = DVector::zeros(N_STATE);
        x[vel_index(pair, 0)] = 1.0;
        let out = propagate_state(&x, &[Vec3::zeros(); N_SENSORS], dt);
        assert!((out[pos_index(pair, 0)] - dt).abs() < 1e-15);
        assert_eq!(out[vel_index(pair, 0)], 1.0);
    }

    #[test]
    fn acceleration_difference_integrates_with_half_dt_squared() {
        // da = (0,0,6) on the pair (1,2), dt = 0.5: v gains (0,0,3) and p
        // gains (0,0,0.75).
        let pair = pair_index(1, 2).unwrap();
        let mut accel = [Vec3::zeros(); N_SENSORS];
        accel[2] = Vec3::new(0.0, 0.0, 6.0);
        let x = DVector::zeros(N_STATE);
        let out = propagate_state(&x, &accel, 0.5);
        assert!((out[vel_index(pair, 2)] - 3.0).abs() < 1e-15);
        assert!((out[pos_index(pair, 2)] - 0.75).abs() < 1e-15);
        // Node 1 is the pair's x side, so the sign flips for (0,1)-style
        // pairs where node 2 is not a member.
        let other = pair_index(0, 1).unwrap();
        assert_eq!(out[vel_index(other, 2)], 0.0);
    }

    #[test]
    fn matching_bias_cancels_the_control_exactly() {
        let pair = pair_index(1, 2).unwrap();
        let mut accel = [Vec3::zeros(); N_SENSORS];
        accel[2] = Vec3::new(0.3, -0.2, 0.9);
        let mut x = DVector::zeros(N_STATE);
        for axis in 0..3 {
            x[bias_index(2, axis)] = accel[2][axis];
        }
        let out = propagate_state(&x, &accel, 1.0 / 60.0);
        for axis in 0..3 {
            assert_eq!(out[pos_index(pair, axis)], 0.0);
            assert_eq!(out[vel_index(pair, axis)], 0.0);
        }
    }

    #[test]
    fn biases_are_constant_under_propagation() {
        let mut x = DVector::zeros(N_STATE);
        x[bias_index(3, 1)] = 0.125;
        let out = propagate_state(&x, &[Vec3::new(1.0, 2.0, 3.0); N_SENSORS], 0.02);
        assert_eq!(out[bias_index(3, 1)], 0.125);
    }

    #[test]
    fn unit_noise_block_is_the_frozen_example() {
        let q = process_noise(&ProcessNoiseSpec { sigma_accel: 1.0, sigma_bias_walk: 0.0 }, 1.0);
        let (pi, vi) = (pos_index(0, 0), vel_index(0, 0));
        assert!((q[(pi, pi)] - 0.5).abs() < 1e-15);
        assert!((q[(pi, vi)] - 1.0).abs() < 1e-15);
        assert!((q[(vi, pi)] - 1.0).abs() < 1e-15);
        assert!((q[(vi, vi)] - 2.0).abs() < 1e-15);
        // The block is exactly singular.
        let det = q[(pi, pi)] * q[(vi, vi)] - q[(pi, vi)] * q[(vi, pi)];
        assert_eq!(det, 0.0);
    }

    #[test]
    fn zero_spec_gives_zero_noise() {
        let q = process_noise(&ProcessNoiseSpec { sigma_accel: 0.0, sigma_bias_walk: 0.0 }, 0.01);
        assert_eq!(q.norm(), 0.0);
    }

    #[test]
    fn default_noise_factors_without_jitter() {
        let q = process_noise(&ProcessNoiseSpec::default(), 1.0 / 60.0);
        let l = semidefinite_cholesky(&q).expect("Q is PSD by construction");
        assert!(((&l * l.transpose()) - &q).norm() < 1e-12 * q.norm().max(1.0));
    }

    #[test]
    fn extraction_helpers_round_trip() {
        let mut x = DVector::zeros(N_STATE);
        x[pos_index(7, 1)] = 0.4;
        x[vel_index(7, 2)] = -0.2;
        x[bias_index(4, 0)] = 0.05;
        assert_eq!(state_positions(&x)[7], Vec3::new(0.0, 0.4, 0.0));
        assert_eq!(state_velocities(&x)[7], Vec3::new(0.0, 0.0, -0.2));
        assert_eq!(state_biases(&x)[4], Vec3::new(0.05, 0.0, 0.0));
        assert!((state_distances(&x)[7] - 0.4).abs() < 1e-15);
    }
}
