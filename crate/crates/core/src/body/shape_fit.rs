//! Anthropometric measurement and the inverse problem: recovering the four
//! shape factors from height, weight, and seven T-pose inter-sensor
//! distances via ridge regression.

use super::{
    forward_kinematics, BodyError, BodyShape, BodyTemplate, Pose, FACTOR_RANGE, HEIGHT_RANGE_M,
};
use nalgebra::DMatrix;
use rand::Rng;

pub const BODY_DENSITY_KG_M3: f64 = 985.0;

const N_FEATURES: usize = 9;
const MIN_FIT_SAMPLES: usize = 50;
// The design must span at least as many directions as there are targets,
// or the map is unidentifiable even on the training span.
const MIN_DESIGN_RANK: usize = 4;

/// Height, weight, and the template's seven inter-sensor T-pose distances.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Anthro {
    pub height_m: f64,
    pub weight_kg: f64,
    pub distances_m: [f64; 7],
}

impl Anthro {
    pub fn as_features(&self) -> [f64; N_FEATURES] {
        let mut f = [0.0; N_FEATURES];
        f[0] = self.height_m;
        f[1] = self.weight_kg;
        f[2..].copy_from_slice(&self.distances_m);
        f
    }
}

/// Measures a scaled template: standing height and weight from the capsule
/// hull, distances from T-pose sensor placements.
pub fn measure_anthro(template: &BodyTemplate, shape: &BodyShape) -> Anthro {
    let fk = forward_kinematics(template, shape, &Pose::t_pose());
    let mut distances_m = [0.0; 7];
    for (d, &(x, y)) in distances_m.iter_mut().zip(template.anthro_pairs.iter()) {
        *d = (fk.sensor_pos[y] - fk.sensor_pos[x]).norm();
    }
    Anthro {
        height_m: template.height(shape),
        weight_kg: template.weight(shape),
        distances_m,
    }
}

/// Linear map from standardized anthropometrics to shape factors, with the
/// training centroids baked in so that the mean input predicts the mean
/// target exactly.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ShapeEstimator {
    /// Row-major 4 x 9 coefficient matrix over standardized features.
    coefficients: Vec<f64>,
    feature_mean: [f64; N_FEATURES],
    feature_scale: [f64; N_FEATURES],
    target_mean: [f64; 4],
    pub lambda_rel: f64,
}

/// Ridge fit of shape factors against anthro features. `lambda_rel` scales
/// the penalty relative to the mean Gram diagonal so the fit is invariant
/// to consistent duplication of the training set.
pub fn fit_shape_estimator(
    samples: &[(Anthro, BodyShape)],
    lambda_rel: f64,
) -> Result<ShapeEstimator, BodyError> {
    let n = samples.len();
    if n < MIN_FIT_SAMPLES {
        return Err(BodyError::InsufficientSamples { got: n, need: MIN_FIT_SAMPLES });
    }

    let mut feature_mean = [0.0; N_FEATURES];
    let mut target_mean = [0.0; 4];
    for (a, s) in samples {
        for (m, f) in feature_mean.iter_mut().zip(a.as_features()) {
            *m += f;
        }
        for (m, f) in target_mean.iter_mut().zip(s.factors()) {
            *m += f;
        }
    }
    feature_mean.iter_mut().for_each(|m| *m /= n as f64);
    target_mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut feature_scale = [0.0; N_FEATURES];
    for (a, _) in samples {
        for (v, (f, m)) in feature_scale.iter_mut().zip(a.as_features().iter().zip(&feature_mean)) {
            *v += (f - m) * (f - m);
        }
    }
    for v in feature_scale.iter_mut() {
        *v = (*v / n as f64).sqrt();
        if *v < 1e-12 {
            *v = 1.0; // constant feature: leave centered zeros alone
        }
    }

    // Centered, standardized design matrix and centered targets.
    let x = DMatrix::from_fn(n, N_FEATURES, |i, j| {
        (samples[i].0.as_features()[j] - feature_mean[j]) / feature_scale[j]
    });
    let y = DMatrix::from_fn(n, 4, |i, j| samples[i].1.factors()[j] - target_mean[j]);

    let rank = x.clone().svd(false, false).rank(1e-9 * (n.max(N_FEATURES) as f64));
    if rank < MIN_DESIGN_RANK {
        return Err(BodyError::RankDeficient);
    }

    let gram = x.transpose() * &x;
    let lambda = lambda_rel * gram.trace() / N_FEATURES as f64;
    let mut reg = gram;
    for i in 0..N_FEATURES {
        reg[(i, i)] += lambda;
    }
    let rhs = x.transpose() * y;
    let beta = reg
        .cholesky()
        .ok_or(BodyError::RankDeficient)?
        .solve(&rhs); // 9 x 4

    let mut coefficients = vec![0.0; 4 * N_FEATURES];
    for r in 0..4 {
        for c in 0..N_FEATURES {
            coefficients[r * N_FEATURES + c] = beta[(c, r)];
        }
    }
    Ok(ShapeEstimator { coefficients, feature_mean, feature_scale, target_mean, lambda_rel })
}

impl ShapeEstimator {
    /// Raw affine prediction, before any clamping.
    pub fn predict_factors(&self, anthro: &Anthro) -> [f64; 4] {
        let f = anthro.as_features();
        let mut out = self.target_mean;
        for r in 0..4 {
            for c in 0..N_FEATURES {
                out[r] += self.coefficients[r * N_FEATURES + c]
                    * (f[c] - self.feature_mean[c])
                    / self.feature_scale[c];
            }
        }
        out
    }

    /// Predicts a valid shape. Out-of-box factors are clamped, and if the
    /// clamped combination would leave the standing-height range the global
    /// factor is pulled back into the feasible interval; the flag reports
    /// whether any adjustment happened.
    pub fn predict_shape(&self, template: &BodyTemplate, anthro: &Anthro) -> (BodyShape, bool) {
        let raw = self.predict_factors(anthro);
        let (lo, hi) = FACTOR_RANGE;
        let mut f = raw.map(|v| v.clamp(lo, hi));
        let mut clamped = f != raw;

        // Height is exactly linear in the factors, so the feasible interval
        // for the global factor is available in closed form from probes.
        let h_at = |g: f64| -> f64 {
            height_of_factors(template, [g, f[1], f[2], f[3]])
        };
        let h0 = h_at(1.0);
        let slope = h_at(1.2) - h_at(1.0);
        let slope = slope / 0.2;
        let (hlo, hhi) = HEIGHT_RANGE_M;
        let g_min = (hlo - h0) / slope + 1.0;
        let g_max = (hhi - h0) / slope + 1.0;
        let g = f[0].clamp(g_min.max(lo), g_max.min(hi));
        if (g - f[0]).abs() > 1e-12 {
            f[0] = g;
            clamped = true;
        }
        let shape = BodyShape::new(f).expect("clamped factors must be valid");
        (shape, clamped)
    }
}

/// Height for arbitrary factor values, bypassing the `BodyShape` box check.
/// Only used to probe the (linear) height function.
fn height_of_factors(template: &BodyTemplate, factors: [f64; 4]) -> f64 {
    let shape = BodyShape { factors };
    template.height(&shape)
}

/// Uniform sample from a plausible adult population: factors in
/// [0.85, 1.15], which keeps every combination inside the legal height
/// range (no rejection needed).
pub fn sample_population<R: Rng>(rng: &mut R) -> BodyShape {
    let f = [(); 4].map(|_| rng.gen_range(0.85..=1.15));
    BodyShape::new(f).expect("population box is always valid")
}

/// Uniform rejection sample over the full factor box; corners that violate
/// the height range are retried.
pub fn sample_full_box<R: Rng>(rng: &mut R) -> BodyShape {
    let (lo, hi) = FACTOR_RANGE;
    loop {
        let f = [(); 4].map(|_| rng.gen_range(lo..=hi));
        if let Ok(shape) = BodyShape::new(f) {
            return shape;
        }
    }
}

/// Measured population bodies for estimator training and evaluation.
pub fn synthesize_fit_dataset<R: Rng>(
    template: &BodyTemplate,
    n: usize,
    rng: &mut R,
) -> Vec<(Anthro, BodyShape)> {
    (0..n)
        .map(|_| {
            let shape = sample_population(rng);
            (measure_anthro(template, &shape), shape)
        })
        .collect()
}
