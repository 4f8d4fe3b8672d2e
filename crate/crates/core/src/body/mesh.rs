//! Capsule tessellation. Each bone's capsule is meshed once in the host
//! joint's local frame and moved rigidly by that joint's global transform,
//! so a posed mesh is exactly the T-pose mesh under per-bone rigid motion.

use super::{forward_kinematics, BodyError, BodyShape, BodyTemplate, Pose};
use crate::geometry::{Rotation, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub a: Vec3,
    pub b: Vec3,
    pub c: Vec3,
}

/// The smooth capsule a patch was tessellated from, in world coordinates.
/// Kept alongside the triangles for analytic point-inside tests and for the
/// per-bone bounding sphere used to prefilter segment queries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapsuleSolid {
    pub p1: Vec3,
    pub p2: Vec3,
    pub radius: f64,
    pub bone: usize,
}

impl CapsuleSolid {
    /// Distance from a point to the capsule axis segment.
    pub fn axis_distance(&self, p: &Vec3) -> f64 {
        let d = self.p2 - self.p1;
        let len2 = d.norm_squared();
        let t = if len2 > 0.0 { ((p - self.p1).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
        (p - (self.p1 + d * t)).norm()
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.axis_distance(p) <= self.radius
    }

    pub fn bounding_center(&self) -> Vec3 {
        (self.p1 + self.p2) * 0.5
    }

    pub fn bounding_radius(&self) -> f64 {
        0.5 * (self.p2 - self.p1).norm() + self.radius
    }
}

/// Closed triangle mesh of one capsule.
#[derive(Debug, Clone)]
pub struct CapsulePatch {
    pub bone: usize,
    pub triangles: Vec<Triangle>,
}

#[derive(Debug, Clone)]
pub struct BodyMesh {
    pub patches: Vec<CapsulePatch>,
    pub solids: Vec<CapsuleSolid>,
    pub resolution: usize,
}

impl BodyMesh {
    pub fn triangle_count(&self) -> usize {
        self.patches.iter().map(|p| p.triangles.len()).sum()
    }

    pub fn iter_triangles(&self) -> impl Iterator<Item = &Triangle> {
        self.patches.iter().flat_map(|p| p.triangles.iter())
    }

    /// Point-inside test against the smooth solids (union of capsules), not
    /// the tessellation. Used as the reference for line-of-sight checks.
    pub fn point_inside_solid(&self, p: &Vec3) -> bool {
        self.solids.iter().any(|s| s.contains(p))
    }
}

/// Triangles emitted for one capsule at a given ring resolution.
pub fn capsule_triangle_count(resolution: usize) -> usize {
    let n = resolution;
    let m = (n / 2).max(1); // latitude rows per hemispherical cap
    // Cylinder wall: 2n. Each cap: 2n per inner row plus an n-fan at the pole.
    4 * n * m
}

/// Tessellates every capsule of the posed body. `resolution` is the number
/// of segments around the axis (minimum 4).
pub fn build_mesh(
    template: &BodyTemplate,
    shape: &BodyShape,
    pose: &Pose,
    resolution: usize,
) -> Result<BodyMesh, BodyError> {
    if resolution < 4 {
        return Err(BodyError::InvalidResolution(resolution));
    }
    let fk = forward_kinematics(template, shape, pose);
    let mut patches = Vec::with_capacity(template.capsules.len());
    let mut solids = Vec::with_capacity(template.capsules.len());
    for spec in &template.capsules {
        let (l1, l2, r) = template.capsule_local(spec, shape);
        let local = tessellate_capsule(&l1, &l2, r, resolution);
        let rot: &Rotation = &fk.joint_rot[spec.host];
        let pos = fk.joint_pos[spec.host];
        let triangles = local
            .iter()
            .map(|t| Triangle {
                a: pos + rot.apply(&t.a),
                b: pos + rot.apply(&t.b),
                c: pos + rot.apply(&t.c),
            })
            .collect();
        patches.push(CapsulePatch { bone: spec.host, triangles });
        solids.push(CapsuleSolid {
            p1: pos + rot.apply(&l1),
            p2: pos + rot.apply(&l2),
            radius: r,
            bone: spec.host,
        });
    }
    Ok(BodyMesh { patches, solids, resolution })
}

/// Any unit vector orthogonal to `w`, chosen deterministically.
fn orthogonal_unit(w: &Vec3) -> Vec3 {
    let pick = if w.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    w.cross(&pick).normalize()
}

fn tessellate_capsule(p1: &Vec3, p2: &Vec3, r: f64, n: usize) -> Vec<Triangle> {
    let axis = p2 - p1;
    let len = axis.norm();
    debug_assert!(len > 0.0, "zero-length bones are rejected by template validation");
    let w = axis / len;
    let u = orthogonal_unit(&w);
    let v = w.cross(&u);
    let m = (n / 2).max(1);

    let ring = |center: Vec3, radius: f64, lift: f64| -> Vec<Vec3> {
        (0..n)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                center + (u * th.cos() + v * th.sin()) * radius + w * lift
            })
            .collect()
    };
    let quad_band = |tris: &mut Vec<Triangle>, lower: &[Vec3], upper: &[Vec3]| {
        for i in 0..n {
            let j = (i + 1) % n;
            tris.push(Triangle { a: lower[i], b: lower[j], c: upper[j] });
            tris.push(Triangle { a: lower[i], b: upper[j], c: upper[i] });
        }
    };
    let fan = |tris: &mut Vec<Triangle>, ring: &[Vec3], apex: Vec3| {
        for i in 0..n {
            let j = (i + 1) % n;
            tris.push(Triangle { a: ring[i], b: ring[j], c: apex });
        }
    };

    let mut tris = Vec::with_capacity(capsule_triangle_count(n));

    // Cylinder wall between the two equator rings.
    let eq1 = ring(*p1, r, 0.0);
    let eq2 = ring(*p2, r, 0.0);
    quad_band(&mut tris, &eq1, &eq2);

    // Hemispherical caps, rows from the equator toward each pole. Pole
    // vertices sit exactly at distance r along the axis, so vertical
    // capsules reach their analytic extremes.
    for (center, sign, equator) in [(*p2, 1.0, eq2), (*p1, -1.0, eq1)] {
        let mut prev = equator;
        for k in 1..m {
            let phi = std::f64::consts::FRAC_PI_2 * k as f64 / m as f64;
            let row = ring(center, r * phi.cos(), sign * r * phi.sin());
            quad_band(&mut tris, &prev, &row);
            prev = row;
        }
        fan(&mut tris, &prev, center + w * (sign * r));
    }

    debug_assert_eq!(tris.len(), capsule_triangle_count(n));
    tris
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{BodyShape, Pose, TEMPLATE_HEIGHT_M};
    use crate::geometry::Rotation;

    fn tpl() -> &'static BodyTemplate {
        crate::body::default_template()
    }

    #[test]
    fn triangle_count_matches_closed_form() {
        let mesh = build_mesh(tpl(), &BodyShape::unit(), &Pose::t_pose(), 4).unwrap();
        let per_capsule = capsule_triangle_count(4);
        assert_eq!(per_capsule, 32);
        assert_eq!(mesh.triangle_count(), per_capsule * tpl().capsules.len());
        for p in &mesh.patches {
            assert_eq!(p.triangles.len(), per_capsule);
        }
    }

    #[test]
    fn resolution_floor_enforced() {
        assert!(matches!(
            build_mesh(tpl(), &BodyShape::unit(), &Pose::t_pose(), 3),
            Err(BodyError::InvalidResolution(3))
        ));
    }

    #[test]
    fn mesh_vertical_extent_matches_analytic_height() {
        let mesh = build_mesh(tpl(), &BodyShape::unit(), &Pose::t_pose(), 8).unwrap();
        let mut top = f64::NEG_INFINITY;
        let mut bottom = f64::INFINITY;
        for t in mesh.iter_triangles() {
            for p in [&t.a, &t.b, &t.c] {
                top = top.max(p.y);
                bottom = bottom.min(p.y);
            }
        }
        // Extremes are pole vertices of vertical capsules, hence exact.
        assert!((top - bottom - TEMPLATE_HEIGHT_M).abs() < 1e-12);
    }

    #[test]
    fn posed_patches_are_rigid_transforms_of_tpose_patches() {
        let shape = BodyShape::unit();
        let t_mesh = build_mesh(tpl(), &shape, &Pose::t_pose(), 6).unwrap();
        let mut pose = Pose::t_pose();
        pose.local[8] = Rotation::rot_z(-0.9); // left shoulder
        pose.local[10] = Rotation::rot_y(-1.1); // left elbow
        pose.local[12] = Rotation::rot_x(0.5); // left hip
        let p_mesh = build_mesh(tpl(), &shape, &pose, 6).unwrap();

        let fk_t = forward_kinematics(tpl(), &shape, &Pose::t_pose());
        let fk_p = forward_kinematics(tpl(), &shape, &pose);
        for (pt, pp) in t_mesh.patches.iter().zip(p_mesh.patches.iter()) {
            let bone = pt.bone;
            // x_posed = R_p * R_t^-1 * (x_t - o_t) + o_p
            let rel = fk_p.joint_rot[bone].compose(&fk_t.joint_rot[bone].inverse());
            for (tt, tp) in pt.triangles.iter().zip(pp.triangles.iter()) {
                for (vt, vp) in [(tt.a, tp.a), (tt.b, tp.b), (tt.c, tp.c)] {
                    let mapped = rel.apply(&(vt - fk_t.joint_pos[bone])) + fk_p.joint_pos[bone];
                    assert!((mapped - vp).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn mesh_vertices_lie_on_solid_boundaries() {
        let mesh = build_mesh(tpl(), &BodyShape::unit(), &Pose::t_pose(), 10).unwrap();
        for (patch, solid) in mesh.patches.iter().zip(mesh.solids.iter()) {
            for t in &patch.triangles {
                for p in [&t.a, &t.b, &t.c] {
                    let d = solid.axis_distance(p);
                    assert!(
                        (d - solid.radius).abs() < 1e-9,
                        "vertex off surface by {}",
                        (d - solid.radius).abs()
                    );
                }
            }
        }
    }

    #[test]
    fn sensors_sit_outside_every_solid() {
        // The standoff must survive adversarial shape corners, otherwise
        // line-of-sight segments would start inside the body.
        for factors in [
            [1.0, 1.0, 1.0, 1.0],
            [0.85, 1.15, 0.85, 1.15],
            [1.15, 0.85, 1.15, 0.85],
            [0.9, 0.9, 0.9, 1.15],
        ] {
            let shape = BodyShape::new(factors).unwrap();
            let mesh = build_mesh(tpl(), &shape, &Pose::t_pose(), 8).unwrap();
            let fk = forward_kinematics(tpl(), &shape, &Pose::t_pose());
            for (s, pos) in fk.sensor_pos.iter().enumerate() {
                assert!(
                    !mesh.point_inside_solid(pos),
                    "sensor {s} inside mesh for factors {factors:?}"
                );
            }
        }
    }
}
