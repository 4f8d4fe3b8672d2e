//! The body template: joint tree, leaf tips, capsule shells, sensor mounts,
//! and the anthropometric distance pairs. Constants are chosen so that unit
//! shape factors give a 1.70 m, 70 kg body.
//!
//! Templates can also be loaded from JSON (see `data/body_template.json` for
//! the shipped copy of the defaults). The schema mirrors the structs here
//! with joints referenced by name.

use super::{BodyError, BodyShape, ScaleGroup, N_JOINTS, N_SENSORS};
use crate::geometry::Vec3;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::OnceLock;

#[derive(Debug, Clone, PartialEq)]
pub struct JointSpec {
    pub name: String,
    pub parent: Option<usize>,
    /// Offset from the parent joint, in the parent's frame, meters.
    pub offset: Vec3,
    pub group: ScaleGroup,
}

/// Distal endpoint for a leaf bone that has no child joint (head top,
/// wrists, ankles). Expressed in the owning joint's frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TipSpec {
    pub name: String,
    pub joint: usize,
    pub offset: Vec3,
    pub group: ScaleGroup,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CapsuleEnd {
    Joint(usize),
    Tip(usize),
}

/// A capsule shell around one bone. It lives in the frame of `host`: one
/// endpoint at the host joint, the other at a child joint or tip.
#[derive(Debug, Clone, PartialEq)]
pub struct CapsuleSpec {
    pub host: usize,
    pub end: CapsuleEnd,
    pub radius: f64,
}

/// Where a sensor sits: rigidly attached to a joint frame. `bone_offset`
/// runs along the bone and scales with the joint's group; `radial_offset`
/// lifts the sensor off the capsule surface and scales with the width
/// factor like the radii do, keeping the standoff positive for every shape.
#[derive(Debug, Clone, PartialEq)]
pub struct MountSpec {
    pub name: String,
    pub joint: usize,
    pub bone_offset: Vec3,
    pub radial_offset: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodyTemplate {
    pub joints: Vec<JointSpec>,
    pub tips: Vec<TipSpec>,
    pub capsules: Vec<CapsuleSpec>,
    pub mounts: Vec<MountSpec>,
    /// Sensor index pairs (x < y) used as anthropometric distances.
    pub anthro_pairs: Vec<(usize, usize)>,
    pub density_kg_m3: f64,
}

static DEFAULT: OnceLock<BodyTemplate> = OnceLock::new();

/// The built-in template. Constructed once and shared.
pub fn default_template() -> &'static BodyTemplate {
    DEFAULT.get_or_init(build_default)
}

fn build_default() -> BodyTemplate {
    use ScaleGroup::{Arms, Legs, Torso, Width};
    let j = |name: &str, parent: Option<usize>, offset: [f64; 3], group: ScaleGroup| JointSpec {
        name: name.into(),
        parent,
        offset: Vec3::new(offset[0], offset[1], offset[2]),
        group,
    };
    let joints = vec![
        j("pelvis", None, [0.0, 0.0, 0.0], Torso),          // 0
        j("spine1", Some(0), [0.0, 0.10, 0.0], Torso),      // 1
        j("spine2", Some(1), [0.0, 0.12, 0.0], Torso),      // 2
        j("spine3", Some(2), [0.0, 0.13, 0.0], Torso),      // 3
        j("neck", Some(3), [0.0, 0.12, 0.0], Torso),        // 4
        j("head", Some(4), [0.0, 0.08, 0.0], Torso),        // 5
        j("l_clavicle", Some(3), [0.08, 0.07, 0.0], Width), // 6
        j("r_clavicle", Some(3), [-0.08, 0.07, 0.0], Width), // 7
        j("l_shoulder", Some(6), [0.10, 0.03, 0.0], Arms),  // 8
        j("r_shoulder", Some(7), [-0.10, 0.03, 0.0], Arms), // 9
        j("l_elbow", Some(8), [0.28, 0.0, 0.0], Arms),      // 10
        j("r_elbow", Some(9), [-0.28, 0.0, 0.0], Arms),     // 11
        j("l_hip", Some(0), [0.09, -0.07, 0.0], Width),     // 12
        j("r_hip", Some(0), [-0.09, -0.07, 0.0], Width),    // 13
        j("l_knee", Some(12), [0.0, -0.40, 0.0], Legs),     // 14
        j("r_knee", Some(13), [0.0, -0.40, 0.0], Legs),     // 15
    ];
    let t = |name: &str, joint: usize, offset: [f64; 3], group: ScaleGroup| TipSpec {
        name: name.into(),
        joint,
        offset: Vec3::new(offset[0], offset[1], offset[2]),
        group,
    };
    let tips = vec![
        t("head_top", 5, [0.0, 0.167, 0.0], Torso), // 0
        t("l_wrist", 10, [0.26, 0.0, 0.0], Arms),   // 1
        t("r_wrist", 11, [-0.26, 0.0, 0.0], Arms),  // 2
        t("l_ankle", 14, [0.0, -0.38, 0.0], Legs),  // 3
        t("r_ankle", 15, [0.0, -0.38, 0.0], Legs),  // 4
    ];
    let cj = |host: usize, child: usize, radius: f64| CapsuleSpec {
        host,
        end: CapsuleEnd::Joint(child),
        radius,
    };
    let ct = |host: usize, tip: usize, radius: f64| CapsuleSpec {
        host,
        end: CapsuleEnd::Tip(tip),
        radius,
    };
    let capsules = vec![
        cj(0, 1, 0.105),
        cj(1, 2, 0.105),
        cj(2, 3, 0.095),
        cj(3, 4, 0.085),
        cj(4, 5, 0.053),
        ct(5, 0, 0.085),  // head
        cj(3, 6, 0.05),
        cj(3, 7, 0.05),
        cj(6, 8, 0.05),
        cj(7, 9, 0.05),
        cj(8, 10, 0.04),  // upper arms
        cj(9, 11, 0.04),
        ct(10, 1, 0.036), // forearms
        ct(11, 2, 0.036),
        cj(0, 12, 0.055),
        cj(0, 13, 0.055),
        cj(12, 14, 0.0635), // thighs
        cj(13, 15, 0.0635),
        ct(14, 3, 0.048), // lower legs
        ct(15, 4, 0.048),
    ];
    let m = |name: &str, joint: usize, bone: [f64; 3], radial: [f64; 3]| MountSpec {
        name: name.into(),
        joint,
        bone_offset: Vec3::new(bone[0], bone[1], bone[2]),
        radial_offset: Vec3::new(radial[0], radial[1], radial[2]),
    };
    let mounts = vec![
        m("pelvis", 0, [0.0, 0.0, 0.0], [0.0, 0.0, 0.115]),
        m("head", 5, [0.0, 0.08, 0.0], [0.0, 0.0, 0.115]),
        m("l_forearm", 10, [0.13, 0.0, 0.0], [0.0, 0.046, 0.0]),
        m("r_forearm", 11, [-0.13, 0.0, 0.0], [0.0, 0.046, 0.0]),
        m("l_lowleg", 14, [0.0, -0.19, 0.0], [0.0, 0.0, 0.058]),
        m("r_lowleg", 15, [0.0, -0.19, 0.0], [0.0, 0.0, 0.058]),
    ];
    let anthro_pairs = vec![(0, 1), (0, 2), (0, 3), (2, 3), (4, 5), (1, 2), (1, 3)];
    let template = BodyTemplate {
        joints,
        tips,
        capsules,
        mounts,
        anthro_pairs,
        density_kg_m3: 985.0,
    };
    template.validate().expect("default template must validate");
    template
}

impl BodyTemplate {
    pub fn validate(&self) -> Result<(), BodyError> {
        let err = |msg: String| Err(BodyError::InvalidTemplate(msg));
        if self.joints.len() != N_JOINTS {
            return err(format!("expected {N_JOINTS} joints, got {}", self.joints.len()));
        }
        for (i, j) in self.joints.iter().enumerate() {
            match j.parent {
                None if i != 0 => return err(format!("joint {i} ({}) has no parent", j.name)),
                Some(p) if p >= i => {
                    return err(format!("joint {i} ({}) must come after its parent", j.name))
                }
                Some(_) if j.offset.norm() == 0.0 => {
                    return err(format!("joint {i} ({}) has a zero offset", j.name))
                }
                _ => {}
            }
        }
        for t in &self.tips {
            if t.joint >= N_JOINTS {
                return err(format!("tip {} references joint {}", t.name, t.joint));
            }
            if t.offset.norm() == 0.0 {
                return err(format!("tip {} has a zero offset", t.name));
            }
        }
        for (i, c) in self.capsules.iter().enumerate() {
            if c.host >= N_JOINTS {
                return err(format!("capsule {i} host out of range"));
            }
            if c.radius <= 0.0 {
                return err(format!("capsule {i} has non-positive radius"));
            }
            match c.end {
                CapsuleEnd::Joint(child) => {
                    if self.joints.get(child).map(|s| s.parent) != Some(Some(c.host)) {
                        return err(format!("capsule {i} end joint {child} is not a child of its host"));
                    }
                }
                CapsuleEnd::Tip(t) => {
                    if self.tips.get(t).map(|s| s.joint) != Some(c.host) {
                        return err(format!("capsule {i} tip does not belong to its host"));
                    }
                }
            }
        }
        if self.mounts.len() != N_SENSORS {
            return err(format!("expected {N_SENSORS} mounts, got {}", self.mounts.len()));
        }
        for m in &self.mounts {
            if m.joint >= N_JOINTS {
                return err(format!("mount {} references joint {}", m.name, m.joint));
            }
        }
        if self.anthro_pairs.len() != 7 {
            return err(format!("expected 7 anthro pairs, got {}", self.anthro_pairs.len()));
        }
        for &(x, y) in &self.anthro_pairs {
            if x >= y || y >= N_SENSORS {
                return err(format!("bad anthro pair ({x}, {y})"));
            }
        }
        if !(self.density_kg_m3 > 0.0) {
            return err("density must be positive".into());
        }
        Ok(())
    }

    /// Capsule endpoints and radius in the host joint's local frame, after
    /// shape scaling.
    pub fn capsule_local(&self, spec: &CapsuleSpec, shape: &BodyShape) -> (Vec3, Vec3, f64) {
        let p2 = match spec.end {
            CapsuleEnd::Joint(child) => {
                let c = &self.joints[child];
                c.offset * shape.group_factor(c.group)
            }
            CapsuleEnd::Tip(t) => {
                let tip = &self.tips[t];
                tip.offset * shape.group_factor(tip.group)
            }
        };
        (Vec3::zeros(), p2, spec.radius * shape.radius_factor())
    }

    /// Standing height: vertical extent of the T-pose capsule hull. Exact
    /// because every capsule extreme is an endpoint sphere.
    pub fn height(&self, shape: &BodyShape) -> f64 {
        let fk = super::forward_kinematics(self, shape, &super::Pose::t_pose());
        let mut top = f64::NEG_INFINITY;
        let mut bottom = f64::INFINITY;
        for c in &self.capsules {
            let (l1, l2, r) = self.capsule_local(c, shape);
            let p1 = fk.joint_pos[c.host] + fk.joint_rot[c.host].apply(&l1);
            let p2 = fk.joint_pos[c.host] + fk.joint_rot[c.host].apply(&l2);
            top = top.max(p1.y.max(p2.y) + r);
            bottom = bottom.min(p1.y.min(p2.y) - r);
        }
        top - bottom
    }

    /// Body weight from capsule volumes at constant density. Overlaps at the
    /// joints are counted once per capsule; the radii are calibrated with
    /// that in mind.
    pub fn weight(&self, shape: &BodyShape) -> f64 {
        let volume: f64 = self
            .capsules
            .iter()
            .map(|c| {
                let (p1, p2, r) = self.capsule_local(c, shape);
                capsule_volume((p2 - p1).norm(), r)
            })
            .sum();
        volume * self.density_kg_m3
    }

    pub fn from_json_file(path: &Path) -> Result<Self, BodyError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BodyError::InvalidTemplate(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, BodyError> {
        let raw: TemplateFile = serde_json::from_str(text)
            .map_err(|e| BodyError::InvalidTemplate(format!("parse error: {e}")))?;
        raw.into_template()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TemplateFile::from_template(self))
            .expect("template serialization cannot fail")
    }
}

/// Cylinder plus two hemispherical caps.
pub fn capsule_volume(length: f64, radius: f64) -> f64 {
    use std::f64::consts::PI;
    PI * radius * radius * length + 4.0 / 3.0 * PI * radius.powi(3)
}

// --- JSON schema -----------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct JointFile {
    name: String,
    parent: Option<String>,
    offset: [f64; 3],
    group: ScaleGroup,
}

#[derive(Serialize, Deserialize)]
struct TipFile {
    name: String,
    joint: String,
    offset: [f64; 3],
    group: ScaleGroup,
}

#[derive(Serialize, Deserialize)]
struct CapsuleFile {
    host: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    end_joint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    end_tip: Option<String>,
    radius: f64,
}

#[derive(Serialize, Deserialize)]
struct MountFile {
    name: String,
    joint: String,
    bone_offset: [f64; 3],
    radial_offset: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct TemplateFile {
    joints: Vec<JointFile>,
    tips: Vec<TipFile>,
    capsules: Vec<CapsuleFile>,
    mounts: Vec<MountFile>,
    anthro_pairs: Vec<(String, String)>,
    density_kg_m3: f64,
}

impl TemplateFile {
    fn from_template(t: &BodyTemplate) -> Self {
        let jname = |i: usize| t.joints[i].name.clone();
        TemplateFile {
            joints: t
                .joints
                .iter()
                .map(|j| JointFile {
                    name: j.name.clone(),
                    parent: j.parent.map(jname),
                    offset: [j.offset.x, j.offset.y, j.offset.z],
                    group: j.group,
                })
                .collect(),
            tips: t
                .tips
                .iter()
                .map(|tip| TipFile {
                    name: tip.name.clone(),
                    joint: jname(tip.joint),
                    offset: [tip.offset.x, tip.offset.y, tip.offset.z],
                    group: tip.group,
                })
                .collect(),
            capsules: t
                .capsules
                .iter()
                .map(|c| CapsuleFile {
                    host: jname(c.host),
                    end_joint: match c.end {
                        CapsuleEnd::Joint(j) => Some(jname(j)),
                        CapsuleEnd::Tip(_) => None,
                    },
                    end_tip: match c.end {
                        CapsuleEnd::Tip(i) => Some(t.tips[i].name.clone()),
                        CapsuleEnd::Joint(_) => None,
                    },
                    radius: c.radius,
                })
                .collect(),
            mounts: t
                .mounts
                .iter()
                .map(|m| MountFile {
                    name: m.name.clone(),
                    joint: jname(m.joint),
                    bone_offset: [m.bone_offset.x, m.bone_offset.y, m.bone_offset.z],
                    radial_offset: [m.radial_offset.x, m.radial_offset.y, m.radial_offset.z],
                })
                .collect(),
            anthro_pairs: t
                .anthro_pairs
                .iter()
                .map(|&(x, y)| (t.mounts[x].name.clone(), t.mounts[y].name.clone()))
                .collect(),
            density_kg_m3: t.density_kg_m3,
        }
    }

    fn into_template(self) -> Result<BodyTemplate, BodyError> {
        let joint_idx = |name: &str, joints: &[JointFile]| {
            joints
                .iter()
                .position(|j| j.name == name)
                .ok_or_else(|| BodyError::InvalidTemplate(format!("unknown joint '{name}'")))
        };
        let mut joints = Vec::with_capacity(self.joints.len());
        for j in &self.joints {
            let parent = match &j.parent {
                None => None,
                Some(p) => Some(joint_idx(p, &self.joints)?),
            };
            joints.push(JointSpec {
                name: j.name.clone(),
                parent,
                offset: Vec3::new(j.offset[0], j.offset[1], j.offset[2]),
                group: j.group,
            });
        }
        let mut tips = Vec::with_capacity(self.tips.len());
        for t in &self.tips {
            tips.push(TipSpec {
                name: t.name.clone(),
                joint: joint_idx(&t.joint, &self.joints)?,
                offset: Vec3::new(t.offset[0], t.offset[1], t.offset[2]),
                group: t.group,
            });
        }
        let tip_idx = |name: &str| {
            tips.iter()
                .position(|t: &TipSpec| t.name == name)
                .ok_or_else(|| BodyError::InvalidTemplate(format!("unknown tip '{name}'")))
        };
        let mut capsules = Vec::with_capacity(self.capsules.len());
        for c in &self.capsules {
            let end = match (&c.end_joint, &c.end_tip) {
                (Some(j), None) => CapsuleEnd::Joint(joint_idx(j, &self.joints)?),
                (None, Some(t)) => CapsuleEnd::Tip(tip_idx(t)?),
                _ => {
                    return Err(BodyError::InvalidTemplate(
                        "capsule needs exactly one of end_joint / end_tip".into(),
                    ))
                }
            };
            capsules.push(CapsuleSpec { host: joint_idx(&c.host, &self.joints)?, end, radius: c.radius });
        }
        let mut mounts = Vec::with_capacity(self.mounts.len());
        for m in &self.mounts {
            mounts.push(MountSpec {
                name: m.name.clone(),
                joint: joint_idx(&m.joint, &self.joints)?,
                bone_offset: Vec3::new(m.bone_offset[0], m.bone_offset[1], m.bone_offset[2]),
                radial_offset: Vec3::new(m.radial_offset[0], m.radial_offset[1], m.radial_offset[2]),
            });
        }
        let mount_idx = |name: &str| {
            mounts
                .iter()
                .position(|m: &MountSpec| m.name == name)
                .ok_or_else(|| BodyError::InvalidTemplate(format!("unknown mount '{name}'")))
        };
        let mut anthro_pairs = Vec::with_capacity(self.anthro_pairs.len());
        for (x, y) in &self.anthro_pairs {
            anthro_pairs.push((mount_idx(x)?, mount_idx(y)?));
        }
        let template = BodyTemplate {
            joints,
            tips,
            capsules,
            mounts,
            anthro_pairs,
            density_kg_m3: self.density_kg_m3,
        };
        template.validate()?;
        Ok(template)
    }
}
