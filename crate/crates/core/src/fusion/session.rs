//! The per-subject fusion loop: propagate on last frame's accelerations,
//! gate observation sources by mode, assemble, update, cache.

use super::measurement::{assemble_measurement, measurement_model, PoseObs, PrevMeasCache, RangeObs};
use super::pose_obs::{pose_to_relative_positions, PoseSample, PoseUtConfig};
use super::state::{
    initial_covariance, initial_state, process_noise, propagate_state, state_biases,
    state_distances, ProcessNoiseSpec, N_STATE,
};
use super::ukf::{ukf_propagate, ukf_update, UtParams, UtWeights};
use super::FusionError;
use crate::body::{BodyShape, BodyTemplate, N_PAIRS, N_SENSORS};
use crate::geometry::Vec3;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Which observation sources feed the filter. `None` is an experiment arm
/// that scores raw measurements without running any filter at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FusionMode {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "imu+uwb")]
    ImuUwb,
    #[serde(rename = "imu+pose")]
    ImuPose,
    #[serde(rename = "imu+uwb+pose")]
    ImuUwbPose,
}

impl FusionMode {
    pub fn uses_uwb(&self) -> bool {
        matches!(self, FusionMode::ImuUwb | FusionMode::ImuUwbPose)
    }

    pub fn uses_pose(&self) -> bool {
        matches!(self, FusionMode::ImuPose | FusionMode::ImuUwbPose)
    }

    pub fn label(&self) -> &'static str {
        match self {
            FusionMode::None => "none",
            FusionMode::ImuUwb => "imu+uwb",
            FusionMode::ImuPose => "imu+pose",
            FusionMode::ImuUwbPose => "imu+uwb+pose",
        }
    }

    pub fn all() -> [FusionMode; 4] {
        [FusionMode::None, FusionMode::ImuUwb, FusionMode::ImuPose, FusionMode::ImuUwbPose]
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for FusionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FusionMode::all()
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| format!("unknown fusion mode {s:?}; expected one of none, imu+uwb, imu+pose, imu+uwb+pose"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub mode: FusionMode,
    /// Frame period in seconds.
    pub dt: f64,
    pub state_ut: UtParams,
    pub pose_ut: PoseUtConfig,
    pub process: ProcessNoiseSpec,
    /// Raw-range std assumed for deeply occluded pairs when no pose source
    /// exists to substitute them.
    pub nlos_fallback_sigma: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            mode: FusionMode::ImuUwbPose,
            dt: 1.0 / 60.0,
            state_ut: UtParams::state_defaults(),
            pose_ut: PoseUtConfig::default(),
            process: ProcessNoiseSpec::default(),
            nlos_fallback_sigma: 0.25,
        }
    }
}

/// Everything one frame offers the filter. Sources a mode disables are
/// ignored even when present.
#[derive(Debug, Clone)]
pub struct StepInput<'a> {
    /// Calibrated body-frame accelerations for the current frame.
    pub accel: [Vec3; N_SENSORS],
    pub ranges: Option<RangeObs>,
    pub pose: Option<&'a PoseSample>,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub state: DVector<f64>,
    /// `|p^{xy}|` per pair from the posterior mean.
    pub filtered_distances: [f64; N_PAIRS],
    /// Input accelerations minus the estimated per-node biases.
    pub filtered_accel: [Vec3; N_SENSORS],
    pub nis: f64,
    pub innovation_norm: f64,
}

/// Single-owner filter state for one tracked subject. Sessions are
/// independent; run one per subject, in parallel if desired.
pub struct Session<'t> {
    template: &'t BodyTemplate,
    shape: BodyShape,
    cfg: SessionConfig,
    weights: UtWeights,
    q: DMatrix<f64>,
    state: DVector<f64>,
    cov: DMatrix<f64>,
    prev_accel: Option<[Vec3; N_SENSORS]>,
    prev_meas: Option<PrevMeasCache>,
    frame: usize,
}

impl<'t> Session<'t> {
    pub fn new(
        template: &'t BodyTemplate,
        shape: BodyShape,
        cfg: SessionConfig,
    ) -> Result<Self, FusionError> {
        if cfg.mode == FusionMode::None {
            return Err(FusionError::BadInput(
                "mode 'none' scores raw measurements and runs no filter".into(),
            ));
        }
        if !(cfg.dt > 0.0) {
            return Err(FusionError::BadInput(format!("dt must be positive, got {}", cfg.dt)));
        }
        let weights = UtWeights::new(N_STATE, &cfg.state_ut);
        let q = process_noise(&cfg.process, cfg.dt);
        let state = initial_state(template, &shape);
        Ok(Session {
            template,
            shape,
            cfg,
            weights,
            q,
            state,
            cov: initial_covariance(),
            prev_accel: None,
            prev_meas: None,
            frame: 0,
        })
    }

    pub fn state(&self) -> &DVector<f64> {
        &self.state
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn frame(&self) -> usize {
        self.frame
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    /// One fusion cycle. The time update uses the previous frame's
    /// accelerations as control, so the very first frame is update-only.
    pub fn step(&mut self, input: &StepInput) -> Result<StepOutput, FusionError> {
        if let Some(prev) = self.prev_accel {
            let dt = self.cfg.dt;
            let (mean, cov) = ukf_propagate(
                &self.state,
                &self.cov,
                &self.weights,
                |x| propagate_state(x, &prev, dt),
                &self.q,
            )?;
            self.state = mean;
            self.cov = cov;
        }

        let mut ranges = if self.cfg.mode.uses_uwb() { input.ranges.clone() } else { None };
        if let Some(obs) = ranges.as_mut() {
            if !self.cfg.mode.uses_pose() {
                // No pose source to substitute from: keep the raw reading
                // and assume the saturated hardware noise instead.
                for k in 0..N_PAIRS {
                    if obs.substitute[k] {
                        obs.substitute[k] = false;
                        obs.sigma[k] = self.cfg.nlos_fallback_sigma;
                    }
                }
            }
        }
        let pose_obs = match (self.cfg.mode.uses_pose(), input.pose) {
            (true, Some(sample)) => {
                let (p_hat, r3) = pose_to_relative_positions(
                    self.template,
                    &self.shape,
                    sample,
                    &self.cfg.pose_ut,
                )?;
                Some(PoseObs { p_hat, r3 })
            }
            _ => None,
        };

        let (bundle, cache) = assemble_measurement(
            ranges.as_ref(),
            pose_obs.as_ref(),
            self.prev_meas.as_ref(),
            self.cfg.dt,
        );
        let up = ukf_update(
            &self.state,
            &self.cov,
            &self.weights,
            measurement_model,
            &bundle.z,
            &bundle.r,
        )?;
        self.state = up.mean;
        self.cov = up.cov;
        self.prev_meas = Some(cache);
        self.prev_accel = Some(input.accel);
        self.frame += 1;

        let biases = state_biases(&self.state);
        let mut filtered_accel = [Vec3::zeros(); N_SENSORS];
        for i in 0..N_SENSORS {
            filtered_accel[i] = input.accel[i] - biases[i];
        }
        Ok(StepOutput {
            filtered_distances: state_distances(&self.state),
            filtered_accel,
            state: self.state.clone(),
            nis: up.nis,
            innovation_norm: up.innovation.norm(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{
        default_template, forward_kinematics, sensor_distances, Pose,
    };
    use crate::fusion::pose_obs::encode_pose;
    use crate::fusion::state::bias_index;

    fn tpose_truth() -> ([f64; N_PAIRS], PoseSample) {
        let template = default_template();
        let fk = forward_kinematics(template, &BodyShape::unit(), &Pose::t_pose());
        let d = sensor_distances(&fk);
        let sample = PoseSample::new(
            encode_pose(&Pose::t_pose()).to_vec(),
            vec![1e-4; crate::fusion::N_POSE_PARAMS],
        )
        .unwrap();
        (d, sample)
    }

    #[test]
    fn mode_labels_round_trip() {
        for mode in FusionMode::all() {
            assert_eq!(mode.label().parse::<FusionMode>().unwrap(), mode);
            let json = serde_json::to_string(&mode).unwrap();
            assert_eq!(json, format!("\"{}\"", mode.label()));
            let back: FusionMode = serde_json::from_str(&json).unwrap();
            assert_eq!(back, mode);
        }
        assert!("uwb+imu".parse::<FusionMode>().is_err());
    }

    #[test]
    fn session_rejects_filterless_mode_and_bad_dt() {
        let template = default_template();
        let cfg = SessionConfig { mode: FusionMode::None, ..SessionConfig::default() };
        assert!(Session::new(template, BodyShape::unit(), cfg).is_err());
        let cfg = SessionConfig { dt: 0.0, ..SessionConfig::default() };
        assert!(Session::new(template, BodyShape::unit(), cfg).is_err());
    }

    #[test]
    fn static_truthful_measurements_keep_the_state_pinned() {
        let template = default_template();
        let (d, pose) = tpose_truth();
        let mut session =
            Session::new(template, BodyShape::unit(), SessionConfig::default()).unwrap();
        let truth = session.state().clone();
        let mut last = None;
        for _ in 0..40 {
            let out = session
                .step(&StepInput {
                    accel: [Vec3::zeros(); N_SENSORS],
                    ranges: Some(RangeObs {
                        d,
                        sigma: [0.03; N_PAIRS],
                        substitute: [false; N_PAIRS],
                    }),
                    pose: Some(&pose),
                })
                .unwrap();
            last = Some(out);
        }
        let out = last.unwrap();
        for k in 0..N_PAIRS {
            assert!(
                (out.filtered_distances[k] - d[k]).abs() < 1e-3,
                "pair {k}: {} vs {}",
                out.filtered_distances[k],
                d[k]
            );
        }
        // Positions stay near the (true) initialization.
        for i in 0..45 {
            assert!((out.state[i] - truth[i]).abs() < 2e-3);
        }
    }

    #[test]
    fn reruns_are_bit_identical() {
        let template = default_template();
        let (d, pose) = tpose_truth();
        let run = || {
            let mut session =
                Session::new(template, BodyShape::unit(), SessionConfig::default()).unwrap();
            let mut final_state = None;
            for i in 0..20 {
                let mut ranges = d;
                ranges[0] += 0.001 * i as f64;
                let out = session
                    .step(&StepInput {
                        accel: [Vec3::new(0.01, -0.02, 0.03); N_SENSORS],
                        ranges: Some(RangeObs {
                            d: ranges,
                            sigma: [0.03; N_PAIRS],
                            substitute: [false; N_PAIRS],
                        }),
                        pose: Some(&pose),
                    })
                    .unwrap();
                final_state = Some(out.state);
            }
            final_state.unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn filtered_accel_subtracts_the_estimated_bias() {
        let template = default_template();
        let (d, pose) = tpose_truth();
        let mut session =
            Session::new(template, BodyShape::unit(), SessionConfig::default()).unwrap();
        let accel = [Vec3::new(0.5, 0.0, -0.25); N_SENSORS];
        let mut out = None;
        for _ in 0..5 {
            out = Some(
                session
                    .step(&StepInput {
                        accel,
                        ranges: Some(RangeObs {
                            d,
                            sigma: [0.03; N_PAIRS],
                            substitute: [false; N_PAIRS],
                        }),
                        pose: Some(&pose),
                    })
                    .unwrap(),
            );
        }
        let out = out.unwrap();
        for node in 0..N_SENSORS {
            for axis in 0..3 {
                let want = accel[node][axis] - out.state[bias_index(node, axis)];
                assert!((out.filtered_accel[node][axis] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pose_free_mode_ignores_pose_input() {
        let template = default_template();
        let (d, pose) = tpose_truth();
        let cfg = SessionConfig { mode: FusionMode::ImuUwb, ..SessionConfig::default() };
        let run = |with_pose: bool| {
            let mut session = Session::new(template, BodyShape::unit(), cfg).unwrap();
            let mut out = None;
            for _ in 0..10 {
                out = Some(
                    session
                        .step(&StepInput {
                            accel: [Vec3::zeros(); N_SENSORS],
                            ranges: Some(RangeObs {
                                d,
                                sigma: [0.03; N_PAIRS],
                                substitute: [false; N_PAIRS],
                            }),
                            pose: if with_pose { Some(&pose) } else { None },
                        })
                        .unwrap(),
                );
            }
            out.unwrap().state
        };
        assert_eq!(run(true).as_slice(), run(false).as_slice());
    }

    #[test]
    fn substitution_flags_saturate_sigma_without_a_pose_source() {
        // A wildly wrong flagged range pulls the estimate much less in a
        // pose-fused session (substituted) than in a range-only session
        // (kept raw at the saturated sigma).
        let template = default_template();
        let (mut d, pose) = tpose_truth();
        let true_d0 = d[0];
        d[0] = 5.0;
        let mut substitute = [false; N_PAIRS];
        substitute[0] = true;
        let feed = |mode: FusionMode, pose_in: Option<&PoseSample>| {
            let cfg = SessionConfig { mode, ..SessionConfig::default() };
            let mut session = Session::new(template, BodyShape::unit(), cfg).unwrap();
            let mut out = None;
            for _ in 0..30 {
                out = Some(
                    session
                        .step(&StepInput {
                            accel: [Vec3::zeros(); N_SENSORS],
                            ranges: Some(RangeObs { d, sigma: [0.10; N_PAIRS], substitute }),
                            pose: pose_in,
                        })
                        .unwrap(),
                );
            }
            out.unwrap().filtered_distances[0]
        };
        let fused = feed(FusionMode::ImuUwbPose, Some(&pose));
        let raw_only = feed(FusionMode::ImuUwb, None);
        assert!((fused - true_d0).abs() < 0.05, "substituted estimate {fused} vs {true_d0}");
        assert!(
            (raw_only - true_d0).abs() > (fused - true_d0).abs(),
            "raw-only {raw_only} should drift further than {fused}"
        );
    }
}
