//! Line-of-sight scoring between sensor pairs through the body mesh, and
//! the visibility-dependent ranging error model.
//!
//! A sight line is the open segment between two mounted radios. Each capsule
//! contributes the parity-paired intervals where the segment runs inside its
//! own closed mesh patch; the blocked fraction is the length of the union of
//! those intervals, so overlapping capsules (shoulders inside the torso,
//! thighs crossing the pelvis) are never double counted.

use crate::body::{BodyMesh, Triangle, N_SENSORS, SENSOR_PAIRS};
use crate::geometry::Vec3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Trim at the segment ends so a ray leaving a sensor mounted flush against
/// its own bone does not register a phantom crossing.
pub const SEGMENT_EPS: f64 = 1e-6;
const DET_EPS: f64 = 1e-12;

/// Double-sided Moller-Trumbore ray/triangle test. Returns the parameter t
/// with `orig + t * dir` on the triangle, or None when the ray is parallel
/// to the plane or the hit falls outside the triangle.
pub fn moller_trumbore(orig: &Vec3, dir: &Vec3, tri: &Triangle) -> Option<f64> {
    let e1 = tri.b - tri.a;
    let e2 = tri.c - tri.a;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < DET_EPS {
        return None;
    }
    let inv = 1.0 / det;
    let s = orig - tri.a;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(e2.dot(&q) * inv)
}

/// Crossing of the open segment `a..b` with a triangle, in segment
/// parameter units, endpoints excluded by [`SEGMENT_EPS`].
pub fn segment_triangle_crossing(a: &Vec3, b: &Vec3, tri: &Triangle) -> Option<f64> {
    let dir = b - a;
    moller_trumbore(a, &dir, tri).filter(|t| *t > SEGMENT_EPS && *t < 1.0 - SEGMENT_EPS)
}

fn segment_point_distance(a: &Vec3, b: &Vec3, p: &Vec3) -> f64 {
    let d = b - a;
    let len2 = d.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + d * t)).norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LosReport {
    /// Unobstructed fraction of the sight line, in [0, 1].
    pub proportion: f64,
    /// Absolute length of the occluded part, metres.
    pub blocked_m: f64,
    /// Total triangle crossings over all capsules.
    pub crossings: usize,
    /// True when some capsule's crossing parity disagreed with the analytic
    /// endpoint containment and a hit had to be discarded.
    pub repaired: bool,
}

fn inside_intervals(ts: &[f64], start_inside: bool) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut inside = start_inside;
    let mut prev = 0.0;
    for &t in ts {
        if inside {
            out.push((prev, t));
        }
        inside = !inside;
        prev = t;
    }
    if inside {
        out.push((prev, 1.0));
    }
    out
}

fn intervals_length(intervals: &[(f64, f64)]) -> f64 {
    intervals.iter().map(|(s, e)| e - s).sum()
}

/// Drops the one crossing whose removal leaves the smallest occluded
/// length, the conservative reading of a tessellation artefact.
fn repair_crossings(ts: Vec<f64>, start_inside: bool) -> Vec<f64> {
    if ts.is_empty() {
        return ts;
    }
    let mut best = (f64::INFINITY, 0usize);
    for skip in 0..ts.len() {
        let trimmed: Vec<f64> =
            ts.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, t)| *t).collect();
        let len = intervals_length(&inside_intervals(&trimmed, start_inside));
        if len < best.0 {
            best = (len, skip);
        }
    }
    ts.into_iter().enumerate().filter(|(i, _)| *i != best.1).map(|(_, t)| t).collect()
}

fn union_length(intervals: &mut Vec<(f64, f64)>) -> f64 {
    if intervals.is_empty() {
        return 0.0;
    }
    intervals.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
    let mut total = 0.0;
    let (mut cur_s, mut cur_e) = intervals[0];
    for &(s, e) in intervals.iter().skip(1) {
        if s > cur_e {
            total += cur_e - cur_s;
            cur_s = s;
            cur_e = e;
        } else if e > cur_e {
            cur_e = e;
        }
    }
    total + (cur_e - cur_s)
}

/// Fraction of the sight line from `a` to `b` that clears the body.
///
/// Per capsule, crossings are paired into inside intervals seeded by the
/// analytic containment of the start point; a parity mismatch against the
/// end point's containment is repaired by discarding the least-blocking hit
/// and logged. Capsules whose bounding sphere misses the segment are
/// skipped without touching their triangles.
pub fn los_proportion(mesh: &BodyMesh, a: &Vec3, b: &Vec3) -> LosReport {
    let len = (b - a).norm();
    if len == 0.0 {
        return LosReport { proportion: 1.0, blocked_m: 0.0, crossings: 0, repaired: false };
    }
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    let mut crossings = 0;
    let mut repaired = false;
    for (patch, solid) in mesh.patches.iter().zip(&mesh.solids) {
        if segment_point_distance(a, b, &solid.bounding_center())
            > solid.bounding_radius() + 1e-9
        {
            continue;
        }
        let mut ts: Vec<f64> = patch
            .triangles
            .iter()
            .filter_map(|tri| segment_triangle_crossing(a, b, tri))
            .collect();
        ts.sort_by(|p, q| p.partial_cmp(q).unwrap());
        crossings += ts.len();
        let start_inside = solid.contains(a);
        let end_inside = solid.contains(b);
        if (ts.len() % 2 == 0) != (start_inside == end_inside) {
            log::warn!(
                "sight-line parity anomaly on capsule {}: {} crossings, endpoints inside = ({}, {})",
                solid.bone,
                ts.len(),
                start_inside,
                end_inside
            );
            ts = repair_crossings(ts, start_inside);
            repaired = true;
        }
        intervals.extend(inside_intervals(&ts, start_inside));
    }
    let blocked = union_length(&mut intervals) * len;
    LosReport {
        proportion: (1.0 - blocked / len).clamp(0.0, 1.0),
        blocked_m: blocked,
        crossings,
        repaired,
    }
}

/// Reports for all 15 sensor pairs, ordered like the pair table.
pub fn pair_los_reports(mesh: &BodyMesh, sensors: &[Vec3; N_SENSORS]) -> Vec<LosReport> {
    SENSOR_PAIRS
        .iter()
        .map(|&(x, y)| los_proportion(mesh, &sensors[x], &sensors[y]))
        .collect()
}

/// Visibility-to-noise mapping. Between the thresholds the std ramps
/// linearly from `sigma_min` (clear) up to `sigma_max` at `tau_lower`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LosSigmaConfig {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub tau_lower: f64,
    pub tau_upper: f64,
    /// Std assigned to a kinematic stand-in when the radio reading is too
    /// occluded to trust at all.
    pub sigma_kinematics: f64,
}

impl Default for LosSigmaConfig {
    fn default() -> Self {
        LosSigmaConfig {
            sigma_min: 0.03,
            sigma_max: 0.25,
            tau_lower: 0.3,
            tau_upper: 0.9,
            sigma_kinematics: 0.10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaDecision {
    pub sigma_d: f64,
    /// Replace the radio reading with a kinematic estimate.
    pub substitute: bool,
}

/// Noise model the estimator should assume for a range at visibility `l`.
pub fn sigma_of_los(l: f64, cfg: &LosSigmaConfig) -> SigmaDecision {
    if l >= cfg.tau_upper {
        SigmaDecision { sigma_d: cfg.sigma_min, substitute: false }
    } else if l < cfg.tau_lower {
        SigmaDecision { sigma_d: cfg.sigma_kinematics, substitute: true }
    } else {
        let ramp = (cfg.sigma_max - cfg.sigma_min) * (cfg.tau_upper - l)
            / (cfg.tau_upper - cfg.tau_lower);
        SigmaDecision { sigma_d: ramp + cfg.sigma_min, substitute: false }
    }
}

/// Noise the physical radio actually exhibits at visibility `l`: the same
/// ramp, saturating at `sigma_max` under deep occlusion because hardware
/// has nothing to substitute.
pub fn raw_sigma_of_los(l: f64, cfg: &LosSigmaConfig) -> f64 {
    if l >= cfg.tau_upper {
        cfg.sigma_min
    } else if l < cfg.tau_lower {
        cfg.sigma_max
    } else {
        (cfg.sigma_max - cfg.sigma_min) * (cfg.tau_upper - l) / (cfg.tau_upper - cfg.tau_lower)
            + cfg.sigma_min
    }
}

/// Gaussian range corruption floored at zero; radios never report negative
/// distances.
pub fn noisy_distance(true_d: f64, sigma: f64, rng: &mut impl Rng) -> f64 {
    if sigma <= 0.0 {
        return true_d.max(0.0);
    }
    (true_d + Normal::new(0.0, sigma).unwrap().sample(rng)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{build_mesh, default_template, BodyShape, Pose};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle: clip against the triangle plane, then check the
    /// barycentric coordinates via normal-equation solve.
    fn plane_clip_oracle(orig: &Vec3, dir: &Vec3, tri: &Triangle) -> Option<f64> {
        let e1 = tri.b - tri.a;
        let e2 = tri.c - tri.a;
        let n = e1.cross(&e2);
        let denom = n.dot(dir);
        if denom.abs() < 1e-9 {
            return None;
        }
        let t = n.dot(&(tri.a - orig)) / denom;
        let w = orig + dir * t - tri.a;
        let (a11, a12, a22) = (e1.dot(&e1), e1.dot(&e2), e2.dot(&e2));
        let (b1, b2) = (e1.dot(&w), e2.dot(&w));
        let det = a11 * a22 - a12 * a12;
        let u = (a22 * b1 - a12 * b2) / det;
        let v = (a11 * b2 - a12 * b1) / det;
        if u >= 0.0 && v >= 0.0 && u + v <= 1.0 {
            Some(t)
        } else {
            None
        }
    }

    #[test]
    fn intersection_matches_plane_clip_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = |r: &mut ChaCha8Rng| {
            Vec3::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))
        };
        let mut checked = 0;
        while checked < 10_000 {
            let tri = Triangle { a: v(&mut rng), b: v(&mut rng), c: v(&mut rng) };
            let orig = v(&mut rng);
            let dir = v(&mut rng);
            let e1 = tri.b - tri.a;
            let e2 = tri.c - tri.a;
            let det = dir.cross(&e2).dot(&e1);
            if det.abs() < 1e-6 {
                continue;
            }
            // Skip knife-edge hits where the two formulations may
            // legitimately disagree on the boundary.
            let p = dir.cross(&e2);
            let s = orig - tri.a;
            let u = s.dot(&p) / det;
            let vv = dir.dot(&s.cross(&e1)) / det;
            if u.abs() < 1e-6
                || (u - 1.0).abs() < 1e-6
                || vv.abs() < 1e-6
                || (u + vv - 1.0).abs() < 1e-6
            {
                continue;
            }
            let got = moller_trumbore(&orig, &dir, &tri);
            let want = plane_clip_oracle(&orig, &dir, &tri);
            match (got, want) {
                (None, None) => {}
                (Some(tg), Some(tw)) => assert!((tg - tw).abs() < 1e-9, "{tg} vs {tw}"),
                other => panic!("disagreement: {other:?}"),
            }
            checked += 1;
        }
    }

    fn lower_leg_submesh(resolution: usize) -> BodyMesh {
        let template = default_template();
        let mesh =
            build_mesh(template, &BodyShape::unit(), &Pose::t_pose(), resolution).unwrap();
        // Pick the capsule with the smallest radius below the pelvis: a
        // lower leg, whose axis is vertical in the T-pose.
        let idx = mesh
            .solids
            .iter()
            .position(|s| (s.radius - 0.048).abs() < 1e-12 && s.p1.x > 0.0)
            .expect("left lower leg present");
        BodyMesh {
            patches: vec![mesh.patches[idx].clone()],
            solids: vec![mesh.solids[idx].clone()],
            resolution,
        }
    }

    #[test]
    fn perpendicular_chord_matches_capsule_diameter() {
        let mesh = lower_leg_submesh(32);
        let solid = &mesh.solids[0];
        // Stay on the bone axis but off the ring planes and vertex azimuths:
        // a chord exactly through a shared mesh vertex double-counts.
        let mid = solid.bounding_center() + Vec3::new(0.0, 0.0013, 0.0);
        let dir = Vec3::new(0.3, 0.0, 1.0).normalize();
        let a = mid + dir;
        let b = mid - dir;
        let rep = los_proportion(&mesh, &a, &b);
        let expect = 1.0 - 2.0 * solid.radius / 2.0;
        assert!(!rep.repaired);
        assert_eq!(rep.crossings, 2);
        assert!((rep.proportion - expect).abs() < 0.02, "{} vs {expect}", rep.proportion);
        assert!((rep.blocked_m - 2.0 * solid.radius).abs() < 0.002);
    }

    #[test]
    fn offset_chord_matches_circle_geometry() {
        let mesh = lower_leg_submesh(32);
        let solid = &mesh.solids[0];
        let r = solid.radius;
        let mid = solid.bounding_center();
        for offset in [0.25 * r, 0.5 * r, 0.75 * r] {
            let a = mid + Vec3::new(offset, 0.0, 1.0);
            let b = mid + Vec3::new(offset, 0.0, -1.0);
            let rep = los_proportion(&mesh, &a, &b);
            let chord = 2.0 * (r * r - offset * offset).sqrt();
            assert!(
                (rep.blocked_m - chord).abs() < 0.02,
                "offset {offset}: {} vs {chord}",
                rep.blocked_m
            );
        }
        // Clear miss.
        let a = mid + Vec3::new(3.0 * r, 0.0, 1.0);
        let b = mid + Vec3::new(3.0 * r, 0.0, -1.0);
        let rep = los_proportion(&mesh, &a, &b);
        assert_eq!(rep.crossings, 0);
        assert_eq!(rep.proportion, 1.0);
    }

    #[test]
    fn overlapping_capsules_count_blockage_once() {
        let single = lower_leg_submesh(24);
        let doubled = BodyMesh {
            patches: vec![single.patches[0].clone(), single.patches[0].clone()],
            solids: vec![single.solids[0].clone(), single.solids[0].clone()],
            resolution: single.resolution,
        };
        let mid = single.solids[0].bounding_center() + Vec3::new(0.0, 0.0013, 0.0);
        let dir = Vec3::new(0.3, 0.0, 1.0).normalize();
        let a = mid + dir;
        let b = mid - dir;
        let lone = los_proportion(&single, &a, &b);
        let dup = los_proportion(&doubled, &a, &b);
        assert_eq!(lone.crossings, 2);
        assert_eq!(dup.crossings, 2 * lone.crossings);
        assert!((dup.blocked_m - lone.blocked_m).abs() < 1e-12);
        assert!((lone.blocked_m - 2.0 * single.solids[0].radius).abs() < 0.002);
    }

    #[test]
    fn segment_starting_inside_a_capsule_is_partially_blocked() {
        let mesh = lower_leg_submesh(32);
        let solid = &mesh.solids[0];
        let mid = solid.bounding_center() + Vec3::new(0.0, 0.0013, 0.0);
        let a = mid;
        let b = mid + Vec3::new(0.3, 0.0, 1.0).normalize();
        let rep = los_proportion(&mesh, &a, &b);
        assert!(!rep.repaired);
        assert_eq!(rep.crossings, 1);
        assert!((rep.blocked_m - solid.radius).abs() < 0.002);
    }

    #[test]
    fn odd_parity_with_outside_endpoints_is_repaired() {
        let mesh = lower_leg_submesh(16);
        let solid = mesh.solids[0].clone();
        let mid = solid.bounding_center();
        // One lone wall: a single huge triangle across the segment. The
        // solid says both endpoints are outside, so one crossing is an
        // anomaly and the conservative repair removes it.
        let wall = Triangle {
            a: mid + Vec3::new(-5.0, -5.0, 0.0),
            b: mid + Vec3::new(5.0, -5.0, 0.0),
            c: mid + Vec3::new(0.0, 8.0, 0.0),
        };
        let broken = BodyMesh {
            patches: vec![crate::body::CapsulePatch { bone: solid.bone, triangles: vec![wall] }],
            solids: vec![solid],
            resolution: 16,
        };
        let a = mid + Vec3::new(0.0, 0.0, 1.0);
        let b = mid - Vec3::new(0.0, 0.0, 1.0);
        let rep = los_proportion(&broken, &a, &b);
        assert!(rep.repaired);
        assert_eq!(rep.crossings, 1);
        assert_eq!(rep.blocked_m, 0.0);
        assert_eq!(rep.proportion, 1.0);
    }

    #[test]
    fn full_body_tpose_pair_reports_are_sane() {
        let template = default_template();
        let shape = BodyShape::unit();
        let mesh = build_mesh(template, &shape, &Pose::t_pose(), 12).unwrap();
        let fk = crate::body::forward_kinematics(template, &shape, &Pose::t_pose());
        let reports = pair_los_reports(&mesh, &fk.sensor_pos);
        assert_eq!(reports.len(), 15);
        for rep in &reports {
            assert!((0.0..=1.0).contains(&rep.proportion));
        }
        // In a T-pose the two wrist radios see each other along a line in
        // front of the chest.
        let wrist_pair = crate::body::pair_index(2, 3).unwrap();
        assert!(reports[wrist_pair].proportion > 0.85, "{}", reports[wrist_pair].proportion);
    }

    #[test]
    fn sigma_map_hits_pinned_points() {
        let cfg = LosSigmaConfig::default();
        let cases = [
            (1.0, 0.03, false),
            (0.9, 0.03, false),
            (0.6, 0.14, false),
            (0.3, 0.25, false),
            (0.1, 0.10, true),
        ];
        for (l, want_sigma, want_sub) in cases {
            let d = sigma_of_los(l, &cfg);
            assert!((d.sigma_d - want_sigma).abs() < 1e-12, "l={l}: {}", d.sigma_d);
            assert_eq!(d.substitute, want_sub, "l={l}");
        }
        // Continuity where the ramp meets the clear plateau.
        let below = sigma_of_los(0.9 - 1e-9, &cfg).sigma_d;
        assert!((below - 0.03).abs() < 1e-6);
        // Raw hardware saturates instead of substituting.
        assert_eq!(raw_sigma_of_los(0.1, &cfg), 0.25);
        assert_eq!(raw_sigma_of_los(0.95, &cfg), 0.03);
    }

    #[test]
    fn noisy_distance_never_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let d = noisy_distance(0.01, 0.5, &mut rng);
            assert!(d >= 0.0);
        }
        assert_eq!(noisy_distance(1.5, 0.0, &mut rng), 1.5);
    }

    #[test]
    fn random_offsets_match_chord_analytics() {
        let mesh = lower_leg_submesh(32);
        let solid = &mesh.solids[0];
        let r = solid.radius;
        let mid = solid.bounding_center();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let o: f64 = rng.gen_range(0.0..2.0 * r);
            // Near-tangent offsets are legitimately resolution-sensitive.
            if (o - r).abs() < 0.15 * r {
                continue;
            }
            let a = mid + Vec3::new(o, 0.0, 1.0);
            let b = mid + Vec3::new(o, 0.0, -1.0);
            let rep = los_proportion(&mesh, &a, &b);
            let chord = if o < r { 2.0 * (r * r - o * o).sqrt() } else { 0.0 };
            assert!((rep.blocked_m - chord).abs() < 0.02, "offset {o}");
        }
    }
}
