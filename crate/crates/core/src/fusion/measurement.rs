//! The stacked 120-dimensional observation: 15 ranges, 15 range rates, 45
//! relative-position components from the pose source, and their 45 finite
//! difference rates.
//!
//! Rates are built from consecutive frames, so their covariances follow
//! the differencing arithmetic: `R2 = (R1_k + R1_{k-1}) / dt^2` and
//! `R4 = (R3_k + R3_{k-1}) / dt^2`. Blocks with nothing behind them (a
//! disabled source, or the missing frame before the first) carry zeros
//! with a large variance so the update ignores them.

use super::state::{pos_index, vel_index};
use crate::body::N_PAIRS;
use crate::geometry::Vec3;
use nalgebra::{DMatrix, DVector};

pub const N_MEAS: usize = 8 * N_PAIRS;
const RATE_BASE: usize = N_PAIRS;
const PHAT_BASE: usize = 2 * N_PAIRS;
const VHAT_BASE: usize = 5 * N_PAIRS;

/// Variance for observation slots that should not influence the update.
pub const DISABLED_VAR: f64 = 1e6;

/// One frame of range observations after the error model ran: measured
/// distances, their advertised std, and which pairs are too occluded to
/// trust.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeObs {
    pub d: [f64; N_PAIRS],
    pub sigma: [f64; N_PAIRS],
    pub substitute: [bool; N_PAIRS],
}

/// One frame of pose-derived observations: the 45 relative-position
/// coordinates and their covariance (already overconfidence-corrected).
#[derive(Debug, Clone, PartialEq)]
pub struct PoseObs {
    pub p_hat: DVector<f64>,
    pub r3: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementBundle {
    pub z: DVector<f64>,
    pub r: DMatrix<f64>,
    /// Which range slots were replaced by the kinematic stand-in.
    pub substituted: [bool; N_PAIRS],
}

/// What the next frame needs to form rates.
#[derive(Debug, Clone, PartialEq)]
pub struct PrevMeasCache {
    pub ranges: [f64; N_PAIRS],
    pub r1: [f64; N_PAIRS],
    pub p_hat: DVector<f64>,
    pub r3: DMatrix<f64>,
}

/// `h(x) = [ |p| per pair, |v| per pair, p, v ]`.
pub fn measurement_model(x: &DVector<f64>) -> DVector<f64> {
    let mut h = DVector::zeros(N_MEAS);
    for k in 0..N_PAIRS {
        let p = Vec3::new(x[pos_index(k, 0)], x[pos_index(k, 1)], x[pos_index(k, 2)]);
        let v = Vec3::new(x[vel_index(k, 0)], x[vel_index(k, 1)], x[vel_index(k, 2)]);
        h[k] = p.norm();
        h[RATE_BASE + k] = v.norm();
        for axis in 0..3 {
            h[PHAT_BASE + 3 * k + axis] = p[axis];
            h[VHAT_BASE + 3 * k + axis] = v[axis];
        }
    }
    h
}

fn pair_norm(p_hat: &DVector<f64>, k: usize) -> f64 {
    Vec3::new(p_hat[3 * k], p_hat[3 * k + 1], p_hat[3 * k + 2]).norm()
}

/// Builds the stacked measurement and its block covariance from whatever
/// sources are live this frame, plus the cache the next frame will need.
///
/// Substitution happens here: a flagged pair takes `|p_hat^{xy}|` from the
/// pose observation as its range (keeping the advertised kinematic sigma).
/// A flagged pair without a pose source falls through to its raw reading.
pub fn assemble_measurement(
    ranges: Option<&RangeObs>,
    pose: Option<&PoseObs>,
    prev: Option<&PrevMeasCache>,
    dt: f64,
) -> (MeasurementBundle, PrevMeasCache) {
    assert!(dt > 0.0, "dt must be positive");
    let mut z = DVector::zeros(N_MEAS);
    let mut r = DMatrix::zeros(N_MEAS, N_MEAS);
    let mut substituted = [false; N_PAIRS];

    let mut d_eff = [0.0; N_PAIRS];
    let mut var1 = [DISABLED_VAR; N_PAIRS];
    if let Some(obs) = ranges {
        for k in 0..N_PAIRS {
            d_eff[k] = if obs.substitute[k] {
                match pose {
                    Some(p) => {
                        substituted[k] = true;
                        pair_norm(&p.p_hat, k)
                    }
                    None => obs.d[k],
                }
            } else {
                obs.d[k]
            };
            var1[k] = obs.sigma[k] * obs.sigma[k];
        }
    }
    for k in 0..N_PAIRS {
        z[k] = d_eff[k];
        r[(k, k)] = var1[k];
    }

    match (ranges.is_some(), prev) {
        (true, Some(cache)) => {
            for k in 0..N_PAIRS {
                z[RATE_BASE + k] = (d_eff[k] - cache.ranges[k]) / dt;
                r[(RATE_BASE + k, RATE_BASE + k)] = (var1[k] + cache.r1[k]) / (dt * dt);
            }
        }
        _ => {
            for k in 0..N_PAIRS {
                r[(RATE_BASE + k, RATE_BASE + k)] = DISABLED_VAR;
            }
        }
    }

    let (p_hat_eff, r3_eff) = match pose {
        Some(p) => (p.p_hat.clone(), p.r3.clone()),
        None => (
            DVector::zeros(3 * N_PAIRS),
            DMatrix::identity(3 * N_PAIRS, 3 * N_PAIRS) * DISABLED_VAR,
        ),
    };
    for i in 0..3 * N_PAIRS {
        z[PHAT_BASE + i] = p_hat_eff[i];
        for j in 0..3 * N_PAIRS {
            r[(PHAT_BASE + i, PHAT_BASE + j)] = r3_eff[(i, j)];
        }
    }

    match (pose.is_some(), prev) {
        (true, Some(cache)) => {
            for i in 0..3 * N_PAIRS {
                z[VHAT_BASE + i] = (p_hat_eff[i] - cache.p_hat[i]) / dt;
                for j in 0..3 * N_PAIRS {
                    r[(VHAT_BASE + i, VHAT_BASE + j)] =
                        (r3_eff[(i, j)] + cache.r3[(i, j)]) / (dt * dt);
                }
            }
        }
        _ => {
            for i in 0..3 * N_PAIRS {
                r[(VHAT_BASE + i, VHAT_BASE + i)] = DISABLED_VAR;
            }
        }
    }

    let cache = PrevMeasCache { ranges: d_eff, r1: var1, p_hat: p_hat_eff, r3: r3_eff };
    (MeasurementBundle { z, r, substituted }, cache)
}
