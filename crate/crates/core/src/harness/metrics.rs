//! Scoring estimates against ground truth: distance and acceleration
//! errors, an error CDF, and pose-level angular metrics when an estimated
//! pose stream exists.

use serde::{Deserialize, Serialize};

use crate::body::{forward_kinematics, BodyShape, BodyTemplate, Pose, N_JOINTS, N_PAIRS, N_SENSORS};
use crate::geometry::Vec3;

use super::trajectory::Trajectory;
use super::HarnessError;

/// Joints whose global orientation defines the upper-limb angular score:
/// shoulders (upper arms) and hips (upper legs).
pub const SIP_JOINTS: [usize; 4] = [8, 9, 12, 13];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub error_m: f64,
    pub fraction: f64,
}

/// What one fusion arm produced, aligned frame-for-frame with the truth.
#[derive(Debug, Clone)]
pub struct EstimateSeries {
    pub distances: Vec<[f64; N_PAIRS]>,
    pub accels: Vec<[Vec3; N_SENSORS]>,
    /// Estimated poses, when the arm consumes the pose stream.
    pub poses: Option<Vec<Pose>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean absolute inter-sensor distance error, metres.
    pub distance_mae_m: f64,
    /// Standard deviation of the absolute distance errors.
    pub distance_std_m: f64,
    /// Sampled cumulative distribution of absolute distance errors.
    pub distance_cdf: Vec<CdfPoint>,
    /// Mean absolute acceleration error, m/s^2.
    pub accel_mae_m_s2: f64,
    /// Per-frame mean absolute distance error.
    pub distance_mae_series_m: Vec<f64>,
    /// Per-frame mean absolute acceleration error.
    pub accel_mae_series_m_s2: Vec<f64>,
    /// Mean joint position error after root alignment, metres. Present
    /// only when the arm estimated poses.
    pub positional_error_m: Option<f64>,
    /// Mean geodesic error over shoulders and hips, degrees.
    pub sip_error_deg: Option<f64>,
    /// Mean geodesic error over all joints, degrees.
    pub angular_error_deg: Option<f64>,
}

impl MetricsReport {
    /// Every error is a nonnegative number and the CDF is a valid
    /// distribution function.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let nonneg = |v: f64, name: &str| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(HarnessError::Config(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        nonneg(self.distance_mae_m, "distance_mae_m")?;
        nonneg(self.distance_std_m, "distance_std_m")?;
        nonneg(self.accel_mae_m_s2, "accel_mae_m_s2")?;
        for v in [self.positional_error_m, self.sip_error_deg, self.angular_error_deg]
            .into_iter()
            .flatten()
        {
            nonneg(v, "pose metric")?;
        }
        if let Some(last) = self.distance_cdf.last() {
            if (last.fraction - 1.0).abs() > 1e-12 {
                return Err(HarnessError::Config(format!(
                    "CDF must end at 1, got {}",
                    last.fraction
                )));
            }
        }
        for w in self.distance_cdf.windows(2) {
            if w[1].error_m < w[0].error_m || w[1].fraction < w[0].fraction {
                return Err(HarnessError::Config("CDF must be nondecreasing".into()));
            }
        }
        Ok(())
    }
}

/// At most this many CDF sample points are kept; the tail point is always
/// exact so the CDF ends at 1.
const CDF_MAX_POINTS: usize = 256;

fn error_cdf(mut errors: Vec<f64>) -> Vec<CdfPoint> {
    if errors.is_empty() {
        return Vec::new();
    }
    errors.sort_by(|a, b| a.partial_cmp(b).expect("errors must not be NaN"));
    let n = errors.len();
    let stride = n.div_ceil(CDF_MAX_POINTS).max(1);
    let mut cdf: Vec<CdfPoint> = (0..n)
        .step_by(stride)
        .map(|i| CdfPoint { error_m: errors[i], fraction: (i + 1) as f64 / n as f64 })
        .collect();
    let last = CdfPoint { error_m: errors[n - 1], fraction: 1.0 };
    if cdf.last() != Some(&last) {
        cdf.push(last);
    }
    cdf
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Geodesic angle, in degrees, between true and estimated global joint
/// rotations, per joint.
pub fn joint_angular_errors_deg(
    template: &BodyTemplate,
    shape: &BodyShape,
    truth: &Pose,
    estimate: &Pose,
) -> [f64; N_JOINTS] {
    let fk_t = forward_kinematics(template, shape, truth);
    let fk_e = forward_kinematics(template, shape, estimate);
    std::array::from_fn(|j| fk_t.joint_rot[j].angle_to(&fk_e.joint_rot[j]).to_degrees())
}

/// Scores one estimate stream against the trajectory it was generated
/// from. All series must have the trajectory's length.
pub fn compute_metrics(
    truth: &Trajectory,
    est: &EstimateSeries,
    template: &BodyTemplate,
    shape: &BodyShape,
) -> Result<MetricsReport, HarnessError> {
    let n = truth.len();
    let check = |len: usize| {
        if len == n {
            Ok(())
        } else {
            Err(HarnessError::LengthMismatch { left: n, right: len })
        }
    };
    check(est.distances.len())?;
    check(est.accels.len())?;
    if let Some(poses) = &est.poses {
        check(poses.len())?;
    }

    let mut all_abs_errors = Vec::with_capacity(n * N_PAIRS);
    let mut distance_mae_series_m = Vec::with_capacity(n);
    let mut accel_mae_series_m_s2 = Vec::with_capacity(n);
    for k in 0..n {
        let mut frame_sum = 0.0;
        for pair in 0..N_PAIRS {
            let e = (est.distances[k][pair] - truth.distances[k][pair]).abs();
            all_abs_errors.push(e);
            frame_sum += e;
        }
        distance_mae_series_m.push(frame_sum / N_PAIRS as f64);
        let accel_sum: f64 = (0..N_SENSORS)
            .map(|s| (est.accels[k][s] - truth.accels[k][s]).norm())
            .sum();
        accel_mae_series_m_s2.push(accel_sum / N_SENSORS as f64);
    }
    let (distance_mae_m, distance_std_m) = mean_and_std(&all_abs_errors);
    let accel_mae_m_s2 =
        accel_mae_series_m_s2.iter().sum::<f64>() / accel_mae_series_m_s2.len().max(1) as f64;

    let mut positional_error_m = None;
    let mut sip_error_deg = None;
    let mut angular_error_deg = None;
    if let Some(poses) = &est.poses {
        let mut pos_sum = 0.0;
        let mut ang_sum = 0.0;
        let mut sip_sum = 0.0;
        for (pose_t, pose_e) in truth.poses.iter().zip(poses) {
            let fk_t = forward_kinematics(template, shape, pose_t);
            let fk_e = forward_kinematics(template, shape, pose_e);
            for j in 0..N_JOINTS {
                pos_sum += (fk_e.joint_pos[j] - fk_t.joint_pos[j]).norm();
                ang_sum += fk_t.joint_rot[j].angle_to(&fk_e.joint_rot[j]).to_degrees();
            }
            for &j in &SIP_JOINTS {
                sip_sum += fk_t.joint_rot[j].angle_to(&fk_e.joint_rot[j]).to_degrees();
            }
        }
        let frames = n as f64;
        positional_error_m = Some(pos_sum / (frames * N_JOINTS as f64));
        angular_error_deg = Some(ang_sum / (frames * N_JOINTS as f64));
        sip_error_deg = Some(sip_sum / (frames * SIP_JOINTS.len() as f64));
    }

    let report = MetricsReport {
        distance_mae_m,
        distance_std_m,
        distance_cdf: error_cdf(all_abs_errors),
        accel_mae_m_s2,
        distance_mae_series_m,
        accel_mae_series_m_s2,
        positional_error_m,
        sip_error_deg,
        angular_error_deg,
    };
    report.validate()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::default_template;
    use crate::harness::trajectory::{generate_trajectory, TrajectoryKind, TrajectorySpec};

    fn short_truth() -> Trajectory {
        let spec = TrajectorySpec { duration_s: 0.5, rate_hz: 30.0, ..TrajectorySpec::default() };
        generate_trajectory(&spec, default_template(), &BodyShape::unit()).unwrap()
    }

    fn perfect_estimate(truth: &Trajectory) -> EstimateSeries {
        EstimateSeries {
            distances: truth.distances.clone(),
            accels: truth.accels.clone(),
            poses: Some(truth.poses.clone()),
        }
    }

    #[test]
    fn perfect_estimates_score_zero() {
        let truth = short_truth();
        let est = perfect_estimate(&truth);
        let r =
            compute_metrics(&truth, &est, default_template(), &BodyShape::unit()).unwrap();
        assert_eq!(r.distance_mae_m, 0.0);
        assert_eq!(r.distance_std_m, 0.0);
        assert_eq!(r.accel_mae_m_s2, 0.0);
        assert_eq!(r.positional_error_m, Some(0.0));
        assert!(r.sip_error_deg.unwrap() < 1e-6);
        assert!(r.angular_error_deg.unwrap() < 1e-6);
        assert_eq!(r.distance_cdf.last().unwrap().fraction, 1.0);
    }

    #[test]
    fn ten_degree_twist_scores_ten_degrees_on_that_joint() {
        let template = default_template();
        let shape = BodyShape::unit();
        let truth = Pose::t_pose();
        for axis in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.577, 0.577, 0.578]] {
            let mut aa = truth.to_axis_angles();
            let scale = 10f64.to_radians() / Vec3::new(axis[0], axis[1], axis[2]).norm();
            // l_elbow has no child joints, so only its own global rotation
            // moves.
            aa[10] = [axis[0] * scale, axis[1] * scale, axis[2] * scale];
            let est = Pose::from_axis_angles(&aa);
            let errs = joint_angular_errors_deg(template, &shape, &truth, &est);
            assert!((errs[10] - 10.0).abs() < 1e-6, "axis {axis:?}: {}", errs[10]);
            for (j, e) in errs.iter().enumerate() {
                if j != 10 {
                    assert!(*e < 1e-6, "joint {j} moved: {e}");
                }
            }
        }
    }

    #[test]
    fn hip_rotation_positional_error_matches_hand_fk() {
        // Rotating the left hip -90 deg about x moves only the left knee
        // among joints: its offset (0, -0.4, 0) maps to (0, 0, 0.4), a
        // displacement of 0.4 * sqrt(2).
        let template = default_template();
        let shape = BodyShape::unit();
        let spec = TrajectorySpec {
            kind: TrajectoryKind::StaticTpose,
            duration_s: 0.1,
            rate_hz: 30.0,
        };
        let truth = generate_trajectory(&spec, template, &shape).unwrap();
        let mut aa = Pose::t_pose().to_axis_angles();
        aa[12] = [-std::f64::consts::FRAC_PI_2, 0.0, 0.0];
        let est_pose = Pose::from_axis_angles(&aa);
        let est = EstimateSeries {
            distances: truth.distances.clone(),
            accels: truth.accels.clone(),
            poses: Some(vec![est_pose; truth.len()]),
        };
        let r = compute_metrics(&truth, &est, template, &shape).unwrap();
        let expected = 0.4 * std::f64::consts::SQRT_2 / N_JOINTS as f64;
        assert!(
            (r.positional_error_m.unwrap() - expected).abs() < 1e-9,
            "{} vs {expected}",
            r.positional_error_m.unwrap()
        );
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let truth = short_truth();
        let mut est = perfect_estimate(&truth);
        est.accels.pop();
        assert!(matches!(
            compute_metrics(&truth, &est, default_template(), &BodyShape::unit()),
            Err(HarnessError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn cdf_is_monotone_and_ends_at_one() {
        let errors: Vec<f64> = (0..2000).map(|i| ((i * 37) % 100) as f64 * 0.01).collect();
        let cdf = error_cdf(errors);
        assert!(cdf.len() <= CDF_MAX_POINTS + 1);
        for w in cdf.windows(2) {
            assert!(w[1].error_m >= w[0].error_m);
            assert!(w[1].fraction >= w[0].fraction);
        }
        assert_eq!(cdf.last().unwrap().fraction, 1.0);
    }

    #[test]
    fn biased_distances_produce_that_bias_as_mae() {
        let truth = short_truth();
        let mut est = perfect_estimate(&truth);
        est.poses = None;
        for d in est.distances.iter_mut() {
            for v in d.iter_mut() {
                *v += 0.07;
            }
        }
        let r =
            compute_metrics(&truth, &est, default_template(), &BodyShape::unit()).unwrap();
        assert!((r.distance_mae_m - 0.07).abs() < 1e-12);
        assert!(r.distance_std_m < 1e-12);
        assert!(r.positional_error_m.is_none());
    }
}
