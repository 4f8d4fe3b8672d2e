//! Pose observations: a noisy 6D-rotation oracle standing in for a pose
//! network, and the unscented push-through that turns its per-component
//! uncertainty into a relative-position observation with covariance.

use super::ukf::{unscented_transform, UtParams, UtWeights};
use super::FusionError;
use crate::body::{
    forward_kinematics, relative_sensor_positions, BodyShape, BodyTemplate, Pose, N_JOINTS,
    N_PAIRS,
};
use crate::geometry::{symmetrize, GeometryError, Rot6D};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// 16 joints, six 6D components each.
pub const N_POSE_PARAMS: usize = 6 * N_JOINTS;

/// A pose estimate in 6D rotation coordinates with per-component std.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    pub theta6d: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl PoseSample {
    pub fn new(theta6d: Vec<f64>, sigma: Vec<f64>) -> Result<Self, FusionError> {
        if theta6d.len() != N_POSE_PARAMS || sigma.len() != N_POSE_PARAMS {
            return Err(FusionError::BadInput(format!(
                "pose sample needs {N_POSE_PARAMS} components, got {} / {}",
                theta6d.len(),
                sigma.len()
            )));
        }
        if sigma.iter().any(|&s| !(s > 0.0)) {
            return Err(FusionError::BadInput("pose sigma must be positive".into()));
        }
        Ok(PoseSample { theta6d, sigma })
    }
}

pub fn encode_pose(pose: &Pose) -> [f64; N_POSE_PARAMS] {
    let mut out = [0.0; N_POSE_PARAMS];
    for (j, rot) in pose.local.iter().enumerate() {
        out[6 * j..6 * j + 6].copy_from_slice(&Rot6D::from_rotation(rot).0);
    }
    out
}

pub fn decode_pose(theta: &[f64]) -> Result<Pose, GeometryError> {
    assert_eq!(theta.len(), N_POSE_PARAMS);
    let mut pose = Pose::t_pose();
    for j in 0..N_JOINTS {
        let mut six = [0.0; 6];
        six.copy_from_slice(&theta[6 * j..6 * j + 6]);
        pose.local[j] = Rot6D(six).to_rotation()?;
    }
    Ok(pose)
}

/// Occasional inflated-error frames, with the reported sigma either
/// tracking the inflation (honest) or staying at the base value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutlierPolicy {
    pub rate: f64,
    pub factor: f64,
    pub honest_sigma: bool,
}

impl Default for OutlierPolicy {
    fn default() -> Self {
        OutlierPolicy { rate: 0.0, factor: 10.0, honest_sigma: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoseOracleSpec {
    /// Base noise std per 6D component.
    pub sigma: f64,
    pub outliers: OutlierPolicy,
}

impl Default for PoseOracleSpec {
    fn default() -> Self {
        PoseOracleSpec { sigma: 0.05, outliers: OutlierPolicy::default() }
    }
}

/// Encodes the true pose and perturbs every component with Gaussian noise.
/// Outlier frames inflate the actual noise by `factor`; the advertised
/// sigma follows only when the policy is honest. Consumes a fixed number
/// of RNG draws per call so streams stay aligned across configurations.
pub fn pose_oracle(pose: &Pose, spec: &PoseOracleSpec, rng: &mut impl Rng) -> PoseSample {
    let clean = encode_pose(pose);
    let coin: f64 = rng.gen();
    let outlier = coin < spec.outliers.rate;
    let actual = if outlier { spec.sigma * spec.outliers.factor } else { spec.sigma };
    let reported = if outlier && spec.outliers.honest_sigma {
        spec.sigma * spec.outliers.factor
    } else {
        spec.sigma
    };
    let normal = Normal::new(0.0, actual).expect("sigma must be non-negative");
    let theta6d: Vec<f64> = clean.iter().map(|&c| c + normal.sample(rng)).collect();
    PoseSample { theta6d, sigma: vec![reported.max(1e-12); N_POSE_PARAMS] }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoseUtConfig {
    pub params: UtParams,
    /// Overconfidence correction applied to the output covariance.
    pub r3_factor: f64,
}

impl Default for PoseUtConfig {
    fn default() -> Self {
        PoseUtConfig { params: UtParams::pose_defaults(), r3_factor: 10.0 }
    }
}

fn decode_and_project(
    template: &BodyTemplate,
    shape: &BodyShape,
    theta: &[f64],
) -> Result<DVector<f64>, GeometryError> {
    let pose = decode_pose(theta)?;
    let fk = forward_kinematics(template, shape, &pose);
    let rel = relative_sensor_positions(&fk);
    let mut out = DVector::zeros(3 * N_PAIRS);
    for (k, p) in rel.iter().enumerate() {
        for axis in 0..3 {
            out[3 * k + axis] = p[axis];
        }
    }
    Ok(out)
}

/// Pushes the pose distribution through forward kinematics: 193 sigma
/// points over the diagonal 96-dimensional Gaussian, each decoded by
/// Gram-Schmidt and mapped to the 45 relative-position coordinates.
/// Returns the weighted mean and the covariance already scaled by
/// `r3_factor`.
///
/// A sigma point that decodes to a degenerate rotation is pulled toward
/// the mean by a factor of 1e-6, at most three times, before giving up;
/// degeneracy is a measure-zero accident of large sigmas.
pub fn pose_to_relative_positions(
    template: &BodyTemplate,
    shape: &BodyShape,
    sample: &PoseSample,
    cfg: &PoseUtConfig,
) -> Result<(DVector<f64>, DMatrix<f64>), FusionError> {
    if sample.theta6d.len() != N_POSE_PARAMS || sample.sigma.len() != N_POSE_PARAMS {
        return Err(FusionError::BadInput("pose sample has wrong dimension".into()));
    }
    let weights = UtWeights::new(N_POSE_PARAMS, &cfg.params);
    let scale = weights.spread().sqrt();
    let mut projected = DMatrix::zeros(3 * N_PAIRS, weights.count());
    let centre = decode_and_project(template, shape, &sample.theta6d)?;
    projected.column_mut(0).copy_from(&centre);

    let mut theta = sample.theta6d.clone();
    for i in 0..N_POSE_PARAMS {
        let dev = scale * sample.sigma[i];
        for (col, sign) in [(1 + i, 1.0), (1 + N_POSE_PARAMS + i, -1.0)] {
            let mut shrink = 1.0;
            let mut attempts = 0;
            let value = loop {
                theta[i] = sample.theta6d[i] + sign * dev * shrink;
                match decode_and_project(template, shape, &theta) {
                    Ok(v) => break v,
                    Err(err) => {
                        attempts += 1;
                        if attempts > 3 {
                            theta[i] = sample.theta6d[i];
                            return Err(err.into());
                        }
                        shrink *= 1.0 - 1e-6;
                    }
                }
            };
            projected.column_mut(col).copy_from(&value);
        }
        theta[i] = sample.theta6d[i];
    }

    let t = unscented_transform(&projected, &weights);
    let mut r3 = t.cov * cfg.r3_factor;
    symmetrize(&mut r3);
    Ok((t.mean, r3))
}
