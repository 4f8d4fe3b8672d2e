//! Synthetic pose sequences and their derived ground truth.
//!
//! Four generators: a motionless T-pose, a parametric limb-swinging
//! pattern whose arms sweep across the torso (rich in occlusions), an
//! inline keyframe script, and the same script loaded from a JSON file.

use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use crate::body::{
    forward_kinematics, relative_sensor_positions, sensor_distances, BodyShape, BodyTemplate,
    Pose, N_JOINTS, N_PAIRS, N_SENSORS,
};
use crate::geometry::Vec3;
use crate::imu::synth_accelerations;

use super::HarnessError;

/// One sinusoidal joint-angle channel: `mean + A sin(2 pi f t + phase)`.
/// When `antiphase` is set the right-side joint runs half a cycle behind
/// the left, as in gait.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimbWave {
    pub amplitude_rad: f64,
    pub frequency_hz: f64,
    pub phase_rad: f64,
    pub mean_rad: f64,
    pub antiphase: bool,
}

impl Default for LimbWave {
    fn default() -> Self {
        LimbWave {
            amplitude_rad: 0.0,
            frequency_hz: 0.0,
            phase_rad: 0.0,
            mean_rad: 0.0,
            antiphase: false,
        }
    }
}

impl LimbWave {
    pub fn new(amplitude_rad: f64, frequency_hz: f64, phase_rad: f64, mean_rad: f64) -> Self {
        LimbWave { amplitude_rad, frequency_hz, phase_rad, mean_rad, antiphase: false }
    }

    pub fn with_antiphase(mut self) -> Self {
        self.antiphase = true;
        self
    }

    fn angle(&self, t: f64, right_side: bool) -> f64 {
        let side = if right_side && self.antiphase { std::f64::consts::PI } else { 0.0 };
        self.mean_rad
            + self.amplitude_rad
                * (2.0 * std::f64::consts::PI * self.frequency_hz * t + self.phase_rad + side)
                    .sin()
    }
}

/// Seconds over which the sinusoidal pattern eases in from the T-pose.
///
/// Fusion sessions initialize their position state from the T-pose with
/// zero velocity, so a run has to start there too; a pattern that begins
/// mid-swing would charge the filter for a startup transient that says
/// nothing about tracking.
pub const SINUSOID_RAMP_S: f64 = 1.5;

/// Smoothstep ease-in: zero value and zero slope at `t = 0`, so the ramped
/// pose starts exactly at the T-pose with zero joint velocity.
fn ramp(t: f64) -> f64 {
    if t >= SINUSOID_RAMP_S {
        return 1.0;
    }
    let u = (t / SINUSOID_RAMP_S).max(0.0);
    u * u * (3.0 - 2.0 * u)
}

/// Keyframe: pose as sixteen axis-angle triples pinned to a frame index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub frame: usize,
    pub axis_angles: Vec<[f64; 3]>,
}

/// Keyframes sorted by frame index; poses between keys interpolate each
/// axis-angle component linearly, and the ends clamp.
pub type KeyframeTrack = Vec<Keyframe>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrajectoryKind {
    StaticTpose,
    SinusoidalLimbs {
        #[serde(default = "default_shoulders")]
        shoulders: LimbWave,
        #[serde(default = "default_elbows")]
        elbows: LimbWave,
        #[serde(default = "default_hips")]
        hips: LimbWave,
        #[serde(default = "default_knees")]
        knees: LimbWave,
    },
    ScriptedKeyframes { keys: KeyframeTrack },
    File { path: PathBuf },
}

fn default_shoulders() -> LimbWave {
    LimbWave::new(0.9, 0.35, 0.0, 0.5)
}
fn default_elbows() -> LimbWave {
    LimbWave::new(0.7, 0.35, -std::f64::consts::FRAC_PI_2, 0.9)
}
fn default_hips() -> LimbWave {
    LimbWave::new(0.55, 0.5, 0.0, 0.0).with_antiphase()
}
fn default_knees() -> LimbWave {
    LimbWave::new(0.7, 0.5, std::f64::consts::FRAC_PI_2, 0.4).with_antiphase()
}

impl TrajectoryKind {
    /// The default occlusion-rich pattern: arms sweeping across the chest
    /// while the legs stride, so several sensor pairs lose line of sight
    /// once or twice per cycle. Eases in from the T-pose over
    /// [`SINUSOID_RAMP_S`] seconds.
    pub fn sinusoidal_default() -> Self {
        TrajectoryKind::SinusoidalLimbs {
            shoulders: default_shoulders(),
            elbows: default_elbows(),
            hips: default_hips(),
            knees: default_knees(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectorySpec {
    #[serde(flatten)]
    pub kind: TrajectoryKind,
    pub duration_s: f64,
    pub rate_hz: f64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        TrajectorySpec {
            kind: TrajectoryKind::sinusoidal_default(),
            duration_s: 60.0,
            rate_hz: 60.0,
        }
    }
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.rate_hz > 0.0) {
            return Err(HarnessError::Config(format!("rate must be positive, got {}", self.rate_hz)));
        }
        if !(self.duration_s > 0.0) {
            return Err(HarnessError::Config(format!(
                "duration must be positive, got {}",
                self.duration_s
            )));
        }
        if self.frames() < 3 {
            return Err(HarnessError::Config(format!(
                "duration x rate gives {} frames; need at least 3 for acceleration synthesis",
                self.frames()
            )));
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        (self.duration_s * self.rate_hz).round() as usize
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rate_hz
    }
}

/// A pose sequence with everything the corruption pipeline and the metrics
/// need precomputed: per-frame sensor placements, pairwise relative
/// positions and distances, and finite-difference accelerations.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: f64,
    pub t: Vec<f64>,
    pub poses: Vec<Pose>,
    pub sensor_pos: Vec<[Vec3; N_SENSORS]>,
    pub rel_pos: Vec<[Vec3; N_PAIRS]>,
    pub distances: Vec<[f64; N_PAIRS]>,
    pub accels: Vec<[Vec3; N_SENSORS]>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

// Joint indices the sinusoidal generator drives.
const L_SHOULDER: usize = 8;
const R_SHOULDER: usize = 9;
const L_ELBOW: usize = 10;
const R_ELBOW: usize = 11;
const L_HIP: usize = 12;
const R_HIP: usize = 13;
const L_KNEE: usize = 14;
const R_KNEE: usize = 15;

fn sinusoidal_pose(
    t: f64,
    shoulders: &LimbWave,
    elbows: &LimbWave,
    hips: &LimbWave,
    knees: &LimbWave,
) -> Pose {
    let g = ramp(t);
    let mut aa = [[0.0; 3]; N_JOINTS];
    // Arms swing forward about the vertical axis; the sign mirrors per
    // side so both move toward the front of the body together.
    aa[L_SHOULDER] = [0.0, -g * shoulders.angle(t, false), 0.0];
    aa[R_SHOULDER] = [0.0, g * shoulders.angle(t, true), 0.0];
    aa[L_ELBOW] = [0.0, -g * elbows.angle(t, false), 0.0];
    aa[R_ELBOW] = [0.0, g * elbows.angle(t, true), 0.0];
    // Legs pitch about the lateral axis.
    aa[L_HIP] = [g * hips.angle(t, false), 0.0, 0.0];
    aa[R_HIP] = [g * hips.angle(t, true), 0.0, 0.0];
    aa[L_KNEE] = [g * knees.angle(t, false), 0.0, 0.0];
    aa[R_KNEE] = [g * knees.angle(t, true), 0.0, 0.0];
    Pose::from_axis_angles(&aa)
}

fn keyframe_pose(keys: &KeyframeTrack, frame: usize) -> Pose {
    debug_assert!(!keys.is_empty());
    let first = &keys[0];
    if frame <= first.frame {
        return pose_from_triples(&first.axis_angles);
    }
    for pair in keys.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if frame <= b.frame {
            let span = (b.frame - a.frame) as f64;
            let w = if span == 0.0 { 1.0 } else { (frame - a.frame) as f64 / span };
            let mut aa = [[0.0; 3]; N_JOINTS];
            for j in 0..N_JOINTS {
                for c in 0..3 {
                    aa[j][c] = a.axis_angles[j][c] * (1.0 - w) + b.axis_angles[j][c] * w;
                }
            }
            return Pose::from_axis_angles(&aa);
        }
    }
    pose_from_triples(&keys.last().unwrap().axis_angles)
}

fn pose_from_triples(triples: &[[f64; 3]]) -> Pose {
    let mut aa = [[0.0; 3]; N_JOINTS];
    aa.copy_from_slice(triples);
    Pose::from_axis_angles(&aa)
}

/// Validates a keyframe track: nonempty, strictly increasing frames, and
/// sixteen triples per key.
pub fn validate_keyframes(keys: &KeyframeTrack) -> Result<(), HarnessError> {
    if keys.is_empty() {
        return Err(HarnessError::Config("keyframe track is empty".into()));
    }
    for k in keys {
        if k.axis_angles.len() != N_JOINTS {
            return Err(HarnessError::Config(format!(
                "keyframe {} has {} joint triples; expected {N_JOINTS}",
                k.frame,
                k.axis_angles.len()
            )));
        }
    }
    for pair in keys.windows(2) {
        if pair[1].frame <= pair[0].frame {
            return Err(HarnessError::Config(format!(
                "keyframe frames must strictly increase ({} then {})",
                pair[0].frame, pair[1].frame
            )));
        }
    }
    Ok(())
}

/// Expands a spec into a full ground-truth sequence. Deterministic: no
/// randomness is involved at this stage.
pub fn generate_trajectory(
    spec: &TrajectorySpec,
    template: &BodyTemplate,
    shape: &BodyShape,
) -> Result<Trajectory, HarnessError> {
    spec.validate()?;
    let n = spec.frames();
    let dt = spec.dt();

    let keys_storage;
    let poses: Vec<Pose> = match &spec.kind {
        TrajectoryKind::StaticTpose => vec![Pose::t_pose(); n],
        TrajectoryKind::SinusoidalLimbs { shoulders, elbows, hips, knees } => (0..n)
            .map(|k| sinusoidal_pose(k as f64 * dt, shoulders, elbows, hips, knees))
            .collect(),
        TrajectoryKind::ScriptedKeyframes { keys } => {
            validate_keyframes(keys)?;
            (0..n).map(|k| keyframe_pose(keys, k)).collect()
        }
        TrajectoryKind::File { path } => {
            keys_storage = super::io::read_keyframes(path)?;
            validate_keyframes(&keys_storage)?;
            (0..n).map(|k| keyframe_pose(&keys_storage, k)).collect()
        }
    };

    let mut sensor_pos = Vec::with_capacity(n);
    let mut rel_pos = Vec::with_capacity(n);
    let mut distances = Vec::with_capacity(n);
    for pose in &poses {
        let fk = forward_kinematics(template, shape, pose);
        sensor_pos.push(fk.sensor_pos);
        rel_pos.push(relative_sensor_positions(&fk));
        distances.push(sensor_distances(&fk));
    }
    let accels = synth_accelerations(&sensor_pos, dt)?;
    let t = (0..n).map(|k| k as f64 * dt).collect();

    Ok(Trajectory { dt, t, poses, sensor_pos, rel_pos, distances, accels })
}
