//! Rotations, the continuous 6D rotation encoding, and symmetric matrices
//! with a jitter-escalating Cholesky factorization.
//!
//! Everything downstream (forward kinematics, sigma-point generation,
//! covariance repair) goes through this module, so the contracts here are
//! deliberately strict: rotations are validated on construction and the
//! Cholesky either returns a usable factor or a hard error.

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Orthonormality tolerance for accepting a matrix as a rotation.
pub const ROTATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("degenerate 6D rotation input (near-zero or near-parallel columns)")]
    DegenerateInput,
    #[error("matrix not positive definite even with jitter {max_tried:.3e}")]
    NotPositiveDefinite { max_tried: f64 },
    #[error("matrix is not a rotation: {0}")]
    NotARotation(String),
    #[error("matrix is not symmetric")]
    NotSymmetric,
}

/// A proper rotation in SO(3), stored as a 3x3 matrix with unit determinant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Validates orthonormality (`R^T R = I` within [`ROTATION_TOL`]) and
    /// positive determinant before accepting the matrix.
    pub fn from_matrix(m: Mat3) -> Result<Self, GeometryError> {
        let gram = m.transpose() * m;
        let dev = (gram - Mat3::identity()).abs().max();
        if dev > ROTATION_TOL {
            return Err(GeometryError::NotARotation(format!(
                "orthonormality deviation {dev:.3e}"
            )));
        }
        if m.determinant() < 0.0 {
            return Err(GeometryError::NotARotation("negative determinant".into()));
        }
        Ok(Rotation(m))
    }

    /// Rodrigues formula. A zero vector yields the identity.
    pub fn from_axis_angle(axis_angle: Vec3) -> Self {
        let angle = axis_angle.norm();
        if angle < 1e-15 {
            return Rotation::identity();
        }
        let axis = axis_angle / angle;
        let k = Mat3::new(
            0.0, -axis.z, axis.y, //
            axis.z, 0.0, -axis.x, //
            -axis.y, axis.x, 0.0,
        );
        let m = Mat3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos());
        Rotation(m)
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::from_axis_angle(Vec3::new(angle, 0.0, 0.0))
    }

    pub fn rot_y(angle: f64) -> Self {
        Self::from_axis_angle(Vec3::new(0.0, angle, 0.0))
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle(Vec3::new(0.0, 0.0, angle))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Inverse of a rotation is its transpose.
    pub fn inverse(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn compose(&self, other: &Rotation) -> Self {
        Rotation(self.0 * other.0)
    }

    /// Geodesic distance on SO(3), in radians, in `[0, pi]`.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        let rel = self.0.transpose() * other.0;
        let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }

    /// Log map: axis scaled by angle. Stable near both 0 and pi.
    pub fn to_axis_angle(&self) -> Vec3 {
        let m = &self.0;
        let c = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        let angle = c.acos();
        if angle < 1e-12 {
            return Vec3::zeros();
        }
        if angle < std::f64::consts::PI - 1e-6 {
            let v = Vec3::new(
                m[(2, 1)] - m[(1, 2)],
                m[(0, 2)] - m[(2, 0)],
                m[(1, 0)] - m[(0, 1)],
            );
            return v * (angle / (2.0 * angle.sin()));
        }
        // Near pi the skew part vanishes; recover the axis from the
        // symmetric part, fixing signs with the largest diagonal entry.
        let b = (*m + Mat3::identity()) * 0.5;
        let mut axis = Vec3::new(b[(0, 0)].max(0.0).sqrt(), b[(1, 1)].max(0.0).sqrt(), b[(2, 2)].max(0.0).sqrt());
        let k = axis.imax();
        if axis[k] > 0.0 {
            for i in 0..3 {
                if i != k && b[(k.max(i), k.min(i))] < 0.0 {
                    axis[i] = -axis[i];
                }
            }
        }
        if axis.norm() > 0.0 {
            axis = axis.normalize();
        }
        axis * angle
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        self.compose(&rhs)
    }
}

/// Continuous 6D rotation encoding: the first two columns of the rotation
/// matrix, flattened column-major as `[a1, a2, a3, b1, b2, b3]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rot6D(pub [f64; 6]);

impl Rot6D {
    pub fn from_rotation(r: &Rotation) -> Self {
        let m = r.matrix();
        Rot6D([m[(0, 0)], m[(1, 0)], m[(2, 0)], m[(0, 1)], m[(1, 1)], m[(2, 1)]])
    }

    /// Gram-Schmidt decode: normalize the first column, orthogonalize the
    /// second against it, complete with the cross product. Rejects inputs
    /// whose columns are near zero or near parallel.
    pub fn to_rotation(&self) -> Result<Rotation, GeometryError> {
        let a = Vec3::new(self.0[0], self.0[1], self.0[2]);
        let b = Vec3::new(self.0[3], self.0[4], self.0[5]);
        let na = a.norm();
        if na < 1e-8 {
            return Err(GeometryError::DegenerateInput);
        }
        let c1 = a / na;
        let b_orth = b - c1 * c1.dot(&b);
        let nb = b_orth.norm();
        if nb < 1e-8 {
            return Err(GeometryError::DegenerateInput);
        }
        let c2 = b_orth / nb;
        let c3 = c1.cross(&c2);
        Ok(Rotation(Mat3::from_columns(&[c1, c2, c3])))
    }

    pub fn as_slice(&self) -> &[f64; 6] {
        &self.0
    }
}

/// Symmetrize in place: `M <- (M + M^T) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Escalation schedule for repairing non-positive-definite matrices before
/// factorization. Jitter is expressed relative to `trace(M)/n`, the mean
/// diagonal magnitude, so the policy is scale free.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct JitterPolicy {
    /// First nonzero jitter to try, relative to the mean diagonal.
    pub initial_rel: f64,
    /// Multiplier between attempts.
    pub escalation: f64,
    /// Give up beyond this relative jitter.
    pub max_rel: f64,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        JitterPolicy { initial_rel: 1e-10, escalation: 10.0, max_rel: 1e-4 }
    }
}

/// A symmetric matrix wrapper; construction enforces symmetry within 1e-9.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self, GeometryError> {
        if m.nrows() != m.ncols() {
            return Err(GeometryError::NotSymmetric);
        }
        let scale = m.amax().max(1.0);
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale {
                    return Err(GeometryError::NotSymmetric);
                }
            }
        }
        let mut m = m;
        symmetrize(&mut m);
        Ok(SymMatrix { m })
    }

    /// Forces symmetry instead of validating it.
    pub fn symmetrized(mut m: DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "square matrix required");
        symmetrize(&mut m);
        SymMatrix { m }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    /// Lower-triangular Cholesky factor under the jitter policy. Returns the
    /// factor together with the absolute jitter that was added (0 when the
    /// matrix factored cleanly).
    pub fn cholesky(&self, policy: &JitterPolicy) -> Result<(DMatrix<f64>, f64), GeometryError> {
        cholesky_with_jitter(&self.m, policy)
    }
}

/// Cholesky with the escalation policy applied to an already-symmetric
/// matrix. See [`SymMatrix::cholesky`].
pub fn cholesky_with_jitter(
    m: &DMatrix<f64>,
    policy: &JitterPolicy,
) -> Result<(DMatrix<f64>, f64), GeometryError> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "square matrix required");
    let mean_diag = (m.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
    let norm = m.amax().max(f64::MIN_POSITIVE);

    let mut jitter = 0.0;
    let max_abs = policy.max_rel * mean_diag;
    loop {
        let mut work = m.clone();
        if jitter > 0.0 {
            for i in 0..n {
                work[(i, i)] += jitter;
            }
        }
        if let Some(l) = semidefinite_cholesky(&work) {
            // Guard against silently accepting a bad factor.
            let resid = (&l * l.transpose() - &work).amax();
            if resid <= 1e-8 * norm.max(jitter * n as f64).max(1.0) {
                return Ok((l, jitter));
            }
        }
        if jitter == 0.0 {
            jitter = policy.initial_rel * mean_diag;
        } else {
            jitter *= policy.escalation;
        }
        if jitter > max_abs {
            return Err(GeometryError::NotPositiveDefinite { max_tried: max_abs });
        }
    }
}

/// Lower-triangular LL^T factorization that tolerates exact semidefiniteness:
/// a pivot that is zero (to within rounding) produces a zero column instead
/// of failing. Pivots that are meaningfully negative return `None`.
pub fn semidefinite_cholesky(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(0.0f64, f64::max).max(1.0);
    let neg_tol = 1e-12 * scale;
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -neg_tol {
            return None;
        }
        let piv = d.max(0.0).sqrt();
        l[(j, j)] = piv;
        if piv > 0.0 {
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / piv;
            }
        }
        // piv == 0: leave the column zero, consistent with a semidefinite M.
    }
    Some(l)
}
