//! Capsule body model: a 16-joint skeleton with four shape factors, six
//! sensor mounts, and a capsule shell per bone.
//!
//! The skeleton is deliberately small. It has no hands or feet because the
//! sensor network stops at the forearms and lower legs; leaf bones carry an
//! explicit tip offset so those segments still have geometry. All positions
//! live in a body-centric Left-Up-Forward frame rooted at the pelvis; there
//! is no global translation anywhere in the crate.

mod mesh;
mod shape_fit;
mod template;

pub use mesh::{build_mesh, capsule_triangle_count, BodyMesh, CapsulePatch, CapsuleSolid, Triangle};
pub use shape_fit::{
    fit_shape_estimator, measure_anthro, sample_full_box, sample_population,
    synthesize_fit_dataset, Anthro, ShapeEstimator, BODY_DENSITY_KG_M3,
};
pub use template::{
    capsule_volume, default_template, BodyTemplate, CapsuleEnd, CapsuleSpec, JointSpec, MountSpec,
    TipSpec,
};

use crate::geometry::{Rotation, Vec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const N_JOINTS: usize = 16;
pub const N_SENSORS: usize = 6;
pub const N_PAIRS: usize = 15;

/// Standing height of the default template at unit shape factors, meters.
pub const TEMPLATE_HEIGHT_M: f64 = 1.70;

/// Vertical run from the pelvis sensor to the head sensor at unit factors:
/// the five spine offsets plus the head mount offset. The two sensors share
/// the same forward standoff, so this is exactly their T-pose distance.
pub const TEMPLATE_SPINE_SENSOR_SPAN_M: f64 = 0.63;

/// Allowed range for each shape factor.
pub const FACTOR_RANGE: (f64, f64) = (0.7, 1.4);

/// Allowed standing height for a scaled template.
pub const HEIGHT_RANGE_M: (f64, f64) = (1.2, 2.2);

/// All unordered sensor pairs `(x, y)` with `x < y`, in lexicographic order.
/// This ordering is shared by the state vector, measurement vector, ranging
/// transcripts, and every file format in the crate.
pub const SENSOR_PAIRS: [(usize, usize); N_PAIRS] = [
    (0, 1), (0, 2), (0, 3), (0, 4), (0, 5),
    (1, 2), (1, 3), (1, 4), (1, 5),
    (2, 3), (2, 4), (2, 5),
    (3, 4), (3, 5),
    (4, 5),
];

/// Index of `(x, y)` in [`SENSOR_PAIRS`]. Reversed or diagonal queries get
/// `None`; relative quantities are stored once per unordered pair and must
/// be negated explicitly by the caller if the opposite direction is wanted.
pub fn pair_index(x: usize, y: usize) -> Option<usize> {
    SENSOR_PAIRS.iter().position(|&p| p == (x, y))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BodyError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("mesh resolution {0} too coarse (need >= 4)")]
    InvalidResolution(usize),
    #[error("anthropometric design matrix is rank deficient")]
    RankDeficient,
    #[error("need at least {need} fit samples, got {got}")]
    InsufficientSamples { got: usize, need: usize },
}

/// Which shape factor scales a bone. `Torso` segments scale with the global
/// factor alone; the other groups add their own factor on top of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleGroup {
    Torso,
    Arms,
    Legs,
    Width,
}

/// Four multiplicative shape factors: `[global, arms, legs, width]`.
///
/// Lengths in group g scale by `global + (g - 1)`, so a uniform change of
/// the global factor rescales the whole body exactly linearly while the
/// remaining factors adjust limb lengths and girth relative to it. Capsule
/// radii follow the width group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyShape {
    factors: [f64; 4],
}

impl BodyShape {
    /// Validates the factor box and the resulting standing height of the
    /// default template.
    pub fn new(factors: [f64; 4]) -> Result<Self, BodyError> {
        let (lo, hi) = FACTOR_RANGE;
        for (i, &f) in factors.iter().enumerate() {
            if !(lo..=hi).contains(&f) || !f.is_finite() {
                return Err(BodyError::InvalidShape(format!(
                    "factor {i} = {f} outside [{lo}, {hi}]"
                )));
            }
        }
        let shape = BodyShape { factors };
        let h = template::default_template().height(&shape);
        let (hlo, hhi) = HEIGHT_RANGE_M;
        if !(hlo..=hhi).contains(&h) {
            return Err(BodyError::InvalidShape(format!(
                "standing height {h:.3} m outside [{hlo}, {hhi}]"
            )));
        }
        Ok(shape)
    }

    pub fn unit() -> Self {
        BodyShape { factors: [1.0; 4] }
    }

    pub fn factors(&self) -> [f64; 4] {
        self.factors
    }

    /// Effective length multiplier for a scale group.
    pub fn group_factor(&self, group: ScaleGroup) -> f64 {
        let [global, arms, legs, width] = self.factors;
        match group {
            ScaleGroup::Torso => global,
            ScaleGroup::Arms => global + arms - 1.0,
            ScaleGroup::Legs => global + legs - 1.0,
            ScaleGroup::Width => global + width - 1.0,
        }
    }

    /// Multiplier applied to every capsule radius.
    pub fn radius_factor(&self) -> f64 {
        self.group_factor(ScaleGroup::Width)
    }
}

/// Local joint rotations, parent-relative, indexed like the template joints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub local: [Rotation; N_JOINTS],
}

impl Pose {
    pub fn t_pose() -> Self {
        Pose { local: [Rotation::identity(); N_JOINTS] }
    }

    pub fn from_axis_angles(aa: &[[f64; 3]; N_JOINTS]) -> Self {
        let mut local = [Rotation::identity(); N_JOINTS];
        for (r, v) in local.iter_mut().zip(aa.iter()) {
            *r = Rotation::from_axis_angle(Vec3::new(v[0], v[1], v[2]));
        }
        Pose { local }
    }

    pub fn to_axis_angles(&self) -> [[f64; 3]; N_JOINTS] {
        let mut out = [[0.0; 3]; N_JOINTS];
        for (v, r) in out.iter_mut().zip(self.local.iter()) {
            let aa = r.to_axis_angle();
            *v = [aa.x, aa.y, aa.z];
        }
        out
    }
}

/// Global joint and sensor placements produced by forward kinematics.
#[derive(Debug, Clone)]
pub struct FkResult {
    pub joint_pos: [Vec3; N_JOINTS],
    pub joint_rot: [Rotation; N_JOINTS],
    pub sensor_pos: [Vec3; N_SENSORS],
    pub sensor_rot: [Rotation; N_SENSORS],
}

/// Accumulates transforms root-to-leaf. A joint's offset lives in its
/// parent's frame; its rotation acts about its own origin, so children see
/// `R_parent * R_joint`. Sensor mounts ride the frame of their joint: the
/// bone-aligned part scales with the joint's group factor and the radial
/// standoff with the width factor.
pub fn forward_kinematics(template: &BodyTemplate, shape: &BodyShape, pose: &Pose) -> FkResult {
    let mut joint_pos = [Vec3::zeros(); N_JOINTS];
    let mut joint_rot = [Rotation::identity(); N_JOINTS];
    for (j, spec) in template.joints.iter().enumerate() {
        match spec.parent {
            None => {
                joint_pos[j] = Vec3::zeros();
                joint_rot[j] = pose.local[j];
            }
            Some(p) => {
                debug_assert!(p < j, "joints must be listed parents-first");
                let offset = spec.offset * shape.group_factor(spec.group);
                joint_pos[j] = joint_pos[p] + joint_rot[p].apply(&offset);
                joint_rot[j] = joint_rot[p].compose(&pose.local[j]);
            }
        }
    }

    let mut sensor_pos = [Vec3::zeros(); N_SENSORS];
    let mut sensor_rot = [Rotation::identity(); N_SENSORS];
    for (s, mount) in template.mounts.iter().enumerate() {
        let j = mount.joint;
        let local = mount.bone_offset * shape.group_factor(template.joints[j].group)
            + mount.radial_offset * shape.radius_factor();
        sensor_pos[s] = joint_pos[j] + joint_rot[j].apply(&local);
        sensor_rot[s] = joint_rot[j];
    }

    FkResult { joint_pos, joint_rot, sensor_pos, sensor_rot }
}

/// Relative sensor positions `p^{xy} = p^y - p^x` for every pair in
/// [`SENSOR_PAIRS`] order.
pub fn relative_sensor_positions(fk: &FkResult) -> [Vec3; N_PAIRS] {
    let mut out = [Vec3::zeros(); N_PAIRS];
    for (k, &(x, y)) in SENSOR_PAIRS.iter().enumerate() {
        out[k] = fk.sensor_pos[y] - fk.sensor_pos[x];
    }
    out
}

/// Pairwise sensor distances in [`SENSOR_PAIRS`] order.
pub fn sensor_distances(fk: &FkResult) -> [f64; N_PAIRS] {
    let rel = relative_sensor_positions(fk);
    let mut out = [0.0; N_PAIRS];
    for (d, p) in out.iter_mut().zip(rel.iter()) {
        *d = p.norm();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rotation;
    use approx::assert_relative_eq;

    fn tpl() -> &'static BodyTemplate {
        template::default_template()
    }

    #[test]
    fn pair_table_is_lexicographic_and_rejects_reversed() {
        assert_eq!(SENSOR_PAIRS.len(), 15);
        for (k, &(x, y)) in SENSOR_PAIRS.iter().enumerate() {
            assert!(x < y);
            assert_eq!(pair_index(x, y), Some(k));
            assert_eq!(pair_index(y, x), None, "reversed pair must not resolve");
        }
        assert_eq!(pair_index(2, 2), None);
    }

    #[test]
    fn shape_box_enforced() {
        assert!(BodyShape::new([1.0, 1.0, 1.0, 1.0]).is_ok());
        assert!(BodyShape::new([0.69, 1.0, 1.0, 1.0]).is_err());
        assert!(BodyShape::new([1.0, 1.41, 1.0, 1.0]).is_err());
        // Inside the factor box but the stacked leg/width factors push the
        // standing height past its ceiling.
        assert!(BodyShape::new([1.4, 1.0, 1.4, 1.4]).is_err());
    }

    #[test]
    fn tpose_spine_is_vertical_and_sensors_symmetric() {
        let fk = forward_kinematics(tpl(), &BodyShape::unit(), &Pose::t_pose());
        for j in [0usize, 1, 2, 3, 4, 5] {
            assert_relative_eq!(fk.joint_pos[j].x, 0.0, epsilon = 1e-12);
            assert_relative_eq!(fk.joint_pos[j].z, 0.0, epsilon = 1e-12);
        }
        // Left/right sensor mirror symmetry about the YZ plane.
        for (l, r) in [(2usize, 3usize), (4, 5)] {
            assert_relative_eq!(fk.sensor_pos[l].x, -fk.sensor_pos[r].x, epsilon = 1e-12);
            assert_relative_eq!(fk.sensor_pos[l].y, fk.sensor_pos[r].y, epsilon = 1e-12);
            assert_relative_eq!(fk.sensor_pos[l].z, fk.sensor_pos[r].z, epsilon = 1e-12);
        }
    }

    #[test]
    fn tpose_pelvis_head_distance_is_spine_span() {
        let fk = forward_kinematics(tpl(), &BodyShape::unit(), &Pose::t_pose());
        let rel = relative_sensor_positions(&fk);
        let k = pair_index(0, 1).unwrap();
        assert_relative_eq!(rel[k].norm(), TEMPLATE_SPINE_SENSOR_SPAN_M, epsilon = 1e-12);
    }

    #[test]
    fn root_rotation_rotates_everything() {
        let phi = 1.1;
        let mut pose = Pose::t_pose();
        pose.local[0] = Rotation::rot_z(phi);
        let fk_id = forward_kinematics(tpl(), &BodyShape::unit(), &Pose::t_pose());
        let fk_rot = forward_kinematics(tpl(), &BodyShape::unit(), &pose);
        let rz = Rotation::rot_z(phi);
        for j in 0..N_JOINTS {
            let expected = rz.apply(&fk_id.joint_pos[j]);
            assert!((fk_rot.joint_pos[j] - expected).norm() < 1e-12);
        }
        for s in 0..N_SENSORS {
            let expected = rz.apply(&fk_id.sensor_pos[s]);
            assert!((fk_rot.sensor_pos[s] - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn right_elbow_flexion_matches_two_link_chain() {
        // 90 degree flexion about +y swings the right forearm (which points
        // along -x) to the front (+z). Hand-computed chain:
        //   elbow joint at (-(0.08w + 0.38a), 0.35t + 0.07w + 0.03a, 0)
        //   sensor local offset (-0.13a, 0.046w, 0)
        //   Ry(pi/2): (-0.13a, 0, 0) -> (0, 0, 0.13a)
        let mut pose = Pose::t_pose();
        pose.local[11] = Rotation::rot_y(std::f64::consts::FRAC_PI_2);
        let shape = BodyShape::new([1.05, 1.1, 0.95, 1.02]).unwrap();
        let (t, a, w) = (
            shape.group_factor(ScaleGroup::Torso),
            shape.group_factor(ScaleGroup::Arms),
            shape.group_factor(ScaleGroup::Width),
        );
        let elbow = Vec3::new(-(0.08 * w + 0.38 * a), 0.35 * t + 0.07 * w + 0.03 * a, 0.0);
        let expected = elbow + Vec3::new(0.0, 0.046 * w, 0.13 * a);
        let fk = forward_kinematics(tpl(), &shape, &pose);
        assert!((fk.sensor_pos[3] - expected).norm() < 1e-12, "{:?}", fk.sensor_pos[3]);
    }

    #[test]
    fn relative_positions_are_antisymmetric_by_construction() {
        let fk = forward_kinematics(tpl(), &BodyShape::unit(), &Pose::t_pose());
        let rel = relative_sensor_positions(&fk);
        for (k, &(x, y)) in SENSOR_PAIRS.iter().enumerate() {
            let direct = fk.sensor_pos[y] - fk.sensor_pos[x];
            assert!((rel[k] - direct).norm() < 1e-15);
        }
    }
}
