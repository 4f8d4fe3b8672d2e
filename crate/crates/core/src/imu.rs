//! Accelerometer synthesis, corruption, and mounting calibration.
//!
//! Synthetic accelerations come from central second differences of sensor
//! positions, which is what a gravity-compensated accelerometer would read
//! in the body-centric frame. Corruption adds white noise plus a per-node
//! random-walk bias; calibration recovers the sensor-to-bone alignment from
//! a T-pose hold.

use crate::body::N_SENSORS;
use crate::geometry::{Rotation, Vec3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ImuError {
    #[error("need at least {need} frames of positions, got {got}")]
    TooShort { got: usize, need: usize },
    #[error("reading is in frame {got:?}, expected {expected:?}")]
    FrameMismatch { got: FrameTag, expected: FrameTag },
}

/// Which frame a reading's vectors are expressed in. Raw sensors report in
/// their own world/sensor frames; calibration lifts them to body-centric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameTag {
    SensorWorld,
    BodyCentric,
}

#[derive(Debug, Clone)]
pub struct ImuReading {
    pub t: f64,
    pub accel: [Vec3; N_SENSORS],
    pub orientation: [Rotation; N_SENSORS],
    pub frame: FrameTag,
}

/// Accelerometer error model. Defaults correspond to a consumer-grade MEMS
/// part sampled at 60 Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImuNoiseSpec {
    /// White noise std per axis, m/s^2.
    pub sigma_white: f64,
    /// Bias random-walk increment std per step, m/s^2.
    pub sigma_bias_walk: f64,
    /// Std of the initial bias draw, m/s^2.
    pub initial_bias_std: f64,
    pub seed: u64,
}

impl Default for ImuNoiseSpec {
    fn default() -> Self {
        ImuNoiseSpec {
            sigma_white: 0.04,
            sigma_bias_walk: 0.002,
            initial_bias_std: 0.05,
            seed: 0,
        }
    }
}

/// Central second differences of per-sensor positions:
/// `a_k = (p_{k+1} - 2 p_k + p_{k-1}) / dt^2`, endpoints replicating the
/// nearest interior value. Exact for quadratic trajectories.
pub fn synth_accelerations(
    positions: &[[Vec3; N_SENSORS]],
    dt: f64,
) -> Result<Vec<[Vec3; N_SENSORS]>, ImuError> {
    let n = positions.len();
    if n < 3 {
        return Err(ImuError::TooShort { got: n, need: 3 });
    }
    assert!(dt > 0.0, "dt must be positive");
    let inv = 1.0 / (dt * dt);
    let mut out = vec![[Vec3::zeros(); N_SENSORS]; n];
    for k in 1..n - 1 {
        for s in 0..N_SENSORS {
            out[k][s] = (positions[k + 1][s] - positions[k][s] * 2.0 + positions[k - 1][s]) * inv;
        }
    }
    out[0] = out[1];
    out[n - 1] = out[n - 2];
    Ok(out)
}

/// Bias value per sensor per frame, for scoring estimators against truth.
pub type BiasTrace = Vec<[Vec3; N_SENSORS]>;

/// Adds white noise and a random-walk bias, drawing the initial bias from
/// the noise model. Returns the corrupted stream and the true bias trace.
pub fn corrupt(
    truth: &[[Vec3; N_SENSORS]],
    spec: &ImuNoiseSpec,
) -> (Vec<[Vec3; N_SENSORS]>, BiasTrace) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let init = gaussian(spec.initial_bias_std);
    let mut b0 = [Vec3::zeros(); N_SENSORS];
    for b in b0.iter_mut() {
        *b = Vec3::new(init.sample(&mut rng), init.sample(&mut rng), init.sample(&mut rng));
    }
    corrupt_from(truth, &b0, spec, &mut rng)
}

/// Same as [`corrupt`] but with an explicit initial bias, for controlled
/// injection experiments.
pub fn corrupt_with_initial_bias(
    truth: &[[Vec3; N_SENSORS]],
    initial_bias: &[Vec3; N_SENSORS],
    spec: &ImuNoiseSpec,
) -> (Vec<[Vec3; N_SENSORS]>, BiasTrace) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    corrupt_from(truth, initial_bias, spec, &mut rng)
}

fn corrupt_from(
    truth: &[[Vec3; N_SENSORS]],
    initial_bias: &[Vec3; N_SENSORS],
    spec: &ImuNoiseSpec,
    rng: &mut ChaCha8Rng,
) -> (Vec<[Vec3; N_SENSORS]>, BiasTrace) {
    let white = gaussian(spec.sigma_white);
    let walk = gaussian(spec.sigma_bias_walk);
    let mut bias = *initial_bias;
    let mut meas = Vec::with_capacity(truth.len());
    let mut trace = Vec::with_capacity(truth.len());
    for frame in truth {
        trace.push(bias);
        let mut row = [Vec3::zeros(); N_SENSORS];
        for s in 0..N_SENSORS {
            row[s] = frame[s]
                + bias[s]
                + Vec3::new(white.sample(rng), white.sample(rng), white.sample(rng));
        }
        meas.push(row);
        for b in bias.iter_mut() {
            *b += Vec3::new(walk.sample(rng), walk.sample(rng), walk.sample(rng));
        }
    }
    (meas, trace)
}

fn gaussian(std: f64) -> Normal<f64> {
    // A zero std collapses to a point mass; Normal::new rejects only
    // negative or non-finite values.
    Normal::new(0.0, std).expect("std must be non-negative")
}

/// Per-node rotations recovered by T-pose calibration.
#[derive(Debug, Clone)]
pub struct MountingCalibration {
    /// World-to-body alignment per node.
    pub r_mw: [Rotation; N_SENSORS],
    /// Sensor-to-bone mounting per node.
    pub r_sb: [Rotation; N_SENSORS],
}

/// T-pose calibration: with the bone frames aligned to the body frame
/// during the hold, the mounting rotation is
/// `R_SB = (R_MW * mean(R_WS))^-1` per node.
pub fn calibrate_mounting(
    rws_tpose: &[Rotation; N_SENSORS],
    r_mw: &[Rotation; N_SENSORS],
) -> MountingCalibration {
    let mut r_sb = [Rotation::identity(); N_SENSORS];
    for i in 0..N_SENSORS {
        r_sb[i] = r_mw[i].compose(&rws_tpose[i]).inverse();
    }
    MountingCalibration { r_mw: *r_mw, r_sb }
}

/// Lifts a sensor-frame reading into the body-centric frame:
/// `R_MB = R_MW * R_WS * R_SB` and `a_M = R_MW * R_WS * a_S`.
pub fn apply_calibration(
    reading: &ImuReading,
    calib: &MountingCalibration,
) -> Result<ImuReading, ImuError> {
    if reading.frame != FrameTag::SensorWorld {
        return Err(ImuError::FrameMismatch {
            got: reading.frame,
            expected: FrameTag::SensorWorld,
        });
    }
    let mut accel = [Vec3::zeros(); N_SENSORS];
    let mut orientation = [Rotation::identity(); N_SENSORS];
    for i in 0..N_SENSORS {
        let world = calib.r_mw[i].compose(&reading.orientation[i]);
        accel[i] = world.apply(&reading.accel[i]);
        orientation[i] = world.compose(&calib.r_sb[i]);
    }
    Ok(ImuReading { t: reading.t, accel, orientation, frame: FrameTag::BodyCentric })
}
