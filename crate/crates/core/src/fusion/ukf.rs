//! Scaled sigma-point machinery, independent of any particular state.
//!
//! Everything here works on dynamically sized vectors so the same code
//! drives the 108-dimensional filter state, the 96-dimensional pose
//! transform, and the scalar toy problems in the test suite. Covariance
//! accumulations are phrased as matrix products over the full sigma-point
//! set rather than per-point outer products; at these dimensions that is
//! the difference between a usable and an unusable test suite.

use super::FusionError;
use crate::geometry::{cholesky_with_jitter, symmetrize, GeometryError, JitterPolicy};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

/// Scaled unscented-transform parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl UtParams {
    /// Defaults for the 108-dimensional filter state; kappa keeps
    /// `n + kappa = 3`.
    pub fn state_defaults() -> Self {
        UtParams { alpha: 0.2, beta: 1.0, kappa: -105.0 }
    }

    /// Defaults for the 96-dimensional pose push-through, same
    /// `n + kappa = 3` heuristic.
    pub fn pose_defaults() -> Self {
        UtParams { alpha: 0.09, beta: 1.0, kappa: -93.0 }
    }
}

/// Weights for a fixed dimension: `lambda = alpha^2 (n + kappa) - n`,
/// `Wm_0 = lambda / (n + lambda)`, `Wc_0 = Wm_0 + 1 - alpha^2 + beta`, and
/// `1 / (2 (n + lambda))` everywhere else.
#[derive(Debug, Clone, PartialEq)]
pub struct UtWeights {
    pub n: usize,
    pub lambda: f64,
    pub wm: DVector<f64>,
    pub wc: DVector<f64>,
}

impl UtWeights {
    pub fn new(n: usize, params: &UtParams) -> Self {
        let nf = n as f64;
        let lambda = params.alpha * params.alpha * (nf + params.kappa) - nf;
        let total = nf + lambda;
        assert!(
            total > 0.0,
            "alpha^2 (n + kappa) = {total} must be positive; got n = {n}, kappa = {}",
            params.kappa
        );
        let count = 2 * n + 1;
        let side = 1.0 / (2.0 * total);
        let mut wm = DVector::from_element(count, side);
        let mut wc = DVector::from_element(count, side);
        wm[0] = lambda / total;
        wc[0] = wm[0] + 1.0 - params.alpha * params.alpha + params.beta;
        UtWeights { n, lambda, wm, wc }
    }

    pub fn count(&self) -> usize {
        2 * self.n + 1
    }

    /// `n + lambda`, the scaling applied to the covariance square root.
    pub fn spread(&self) -> f64 {
        self.n as f64 + self.lambda
    }
}

/// The `2n + 1` scaled sigma points as columns: the mean, then
/// `mean + col_i(sqrt((n + lambda) cov))`, then the mirrored set.
pub fn sigma_points(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    weights: &UtWeights,
) -> Result<DMatrix<f64>, GeometryError> {
    let n = weights.n;
    assert_eq!(mean.len(), n, "mean dimension mismatch");
    let scaled = cov * weights.spread();
    let (l, _) = cholesky_with_jitter(&scaled, &JitterPolicy::default())?;
    let mut pts = DMatrix::zeros(n, weights.count());
    for r in 0..n {
        pts[(r, 0)] = mean[r];
    }
    for i in 0..n {
        for r in 0..n {
            let d = l[(r, i)];
            pts[(r, 1 + i)] = mean[r] + d;
            pts[(r, 1 + n + i)] = mean[r] - d;
        }
    }
    Ok(pts)
}

/// Weighted statistics of transformed sigma points (columns).
#[derive(Debug, Clone)]
pub struct Transformed {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Points minus the weighted mean, reused for cross covariances.
    pub centered: DMatrix<f64>,
}

pub fn unscented_transform(points: &DMatrix<f64>, weights: &UtWeights) -> Transformed {
    assert_eq!(points.ncols(), weights.count(), "one column per sigma point");
    let mean = points * &weights.wm;
    let mut centered = points.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let mut weighted = centered.clone();
    for (j, mut col) in weighted.column_iter_mut().enumerate() {
        col *= weights.wc[j];
    }
    let mut cov = &centered * weighted.transpose();
    symmetrize(&mut cov);
    Transformed { mean, cov, centered }
}

/// `sum_i Wc_i (x_i - x̄)(z_i - z̄)^T` from pre-centered point sets.
pub fn cross_covariance(
    centered_x: &DMatrix<f64>,
    centered_z: &DMatrix<f64>,
    weights: &UtWeights,
) -> DMatrix<f64> {
    let mut weighted = centered_z.clone();
    for (j, mut col) in weighted.column_iter_mut().enumerate() {
        col *= weights.wc[j];
    }
    centered_x * weighted.transpose()
}

/// Time update: sigma points through `f`, re-aggregated, plus process
/// noise. `f` is applied per point even when linear so the one code path
/// serves every model.
pub fn ukf_propagate(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    weights: &UtWeights,
    f: impl Fn(&DVector<f64>) -> DVector<f64>,
    process_noise: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>), GeometryError> {
    let pts = sigma_points(mean, cov, weights)?;
    let first = f(&pts.column(0).clone_owned());
    let mut mapped = DMatrix::zeros(first.len(), weights.count());
    mapped.column_mut(0).copy_from(&first);
    for i in 1..weights.count() {
        mapped.column_mut(i).copy_from(&f(&pts.column(i).clone_owned()));
    }
    let t = unscented_transform(&mapped, weights);
    let mut cov_out = t.cov + process_noise;
    symmetrize(&mut cov_out);
    Ok((t.mean, cov_out))
}

/// Result of a measurement update.
#[derive(Debug, Clone)]
pub struct UkfUpdate {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub innovation: DVector<f64>,
    pub predicted_z: DVector<f64>,
    /// Normalized innovation squared, `nu^T S^-1 nu`.
    pub nis: f64,
}

fn innovation_factor(s: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>, FusionError> {
    if let Some(ch) = Cholesky::new(s.clone()) {
        return Ok(ch);
    }
    let mean_diag = (s.trace() / s.nrows() as f64).abs().max(f64::MIN_POSITIVE);
    let mut jitter = 1e-12 * mean_diag;
    for _ in 0..9 {
        let mut sj = s.clone();
        for i in 0..s.nrows() {
            sj[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(sj) {
            return Ok(ch);
        }
        jitter *= 10.0;
    }
    Err(FusionError::SingularInnovation)
}

/// Measurement update: sigma points through `h`, innovation covariance
/// `S = Pzz + R`, gain `K = Pxz S^-1`, and the Joseph-free covariance form
/// `P - K S K^T` with explicit re-symmetrization.
pub fn ukf_update(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    weights: &UtWeights,
    h: impl Fn(&DVector<f64>) -> DVector<f64>,
    z: &DVector<f64>,
    r: &DMatrix<f64>,
) -> Result<UkfUpdate, FusionError> {
    let pts = sigma_points(mean, cov, weights)?;
    let first = h(&pts.column(0).clone_owned());
    assert_eq!(first.len(), z.len(), "h output and z must agree");
    let mut zpts = DMatrix::zeros(first.len(), weights.count());
    zpts.column_mut(0).copy_from(&first);
    for i in 1..weights.count() {
        zpts.column_mut(i).copy_from(&h(&pts.column(i).clone_owned()));
    }
    let t = unscented_transform(&zpts, weights);
    let mut s_mat = &t.cov + r;
    symmetrize(&mut s_mat);

    let mut centered_x = pts;
    for mut col in centered_x.column_iter_mut() {
        col -= mean;
    }
    let pxz = cross_covariance(&centered_x, &t.centered, weights);

    let factor = innovation_factor(&s_mat)?;
    // K = Pxz S^-1 via S K^T = Pxz^T.
    let k = factor.solve(&pxz.transpose()).transpose();
    let innovation = z - &t.mean;
    let new_mean = mean + &k * &innovation;
    let mut new_cov = cov - &k * &s_mat * k.transpose();
    symmetrize(&mut new_cov);
    let nis = innovation.dot(&factor.solve(&innovation));
    Ok(UkfUpdate { mean: new_mean, cov: new_cov, innovation, predicted_z: t.mean, nis })
}
